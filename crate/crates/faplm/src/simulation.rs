//! Monte Carlo studies with known ground truth.
//!
//! Data are generated from `X = FBᵀ + U`, `Y = Uβ₀ + F(Bᵀβ₀) + g₀(Z) + ε`
//! with standard normal `F` and `U`, loadings drawn from Unif(−1, 1),
//! `Z ~ Unif(0, 1)` and Gaussian noise. The estimation study records the
//! ℓ1 coefficient error and the in-sample RMSE of `ĝ`; the power study
//! records the rejection frequency of the debiased max test across a
//! signal grid.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroundTruth};
use crate::error::{FaplmError, Result};
use crate::inference::{self, DeltaChoice, TestConfig};
use crate::regression::{fit_model, FitConfig, KRule, PipelineConfig};
use crate::rng::{RngSpec, StreamKind};

/// Shape of the nonparametric component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkKind {
    /// `g₀(z) = z`
    Linear,
    /// `g₀(z) = sin(2πz)`
    Sine,
}

impl LinkKind {
    pub fn g0(&self, z: f64) -> f64 {
        match self {
            LinkKind::Linear => z,
            LinkKind::Sine => (2.0 * std::f64::consts::PI * z).sin(),
        }
    }
}

/// Estimator variant under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodKind {
    /// Factor step + spline block (the full pipeline).
    Faplm,
    /// No factor adjustment: `Û := X`, spline block kept.
    Plm,
    /// Factor step kept, spline block replaced by intercept + linear z.
    Falm,
}

/// Design of one study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub k_true: usize,
    pub s: usize,
    /// Value of the nonzero coefficients (2 in the estimation studies,
    /// ω in the power studies).
    pub signal: f64,
    pub link: LinkKind,
    pub sigma_eps2: f64,
    pub n_reps: usize,
    pub method: MethodKind,
    pub rng: RngSpec,
    /// Run the ratio selector instead of supplying `k_true` to the fit.
    pub estimate_k: bool,
    pub fit: FitConfig,
}

impl SimulationConfig {
    /// Estimation-study defaults: n = 200, p = 200, K = 2, s = 5,
    /// signal 2, noise variance 0.25, linear link, cross-validated λ.
    pub fn table_defaults() -> Self {
        Self {
            n: 200,
            p: 200,
            k_true: 2,
            s: 5,
            signal: 2.0,
            link: LinkKind::Linear,
            sigma_eps2: 0.25,
            n_reps: 100,
            method: MethodKind::Faplm,
            rng: RngSpec::new(20240, 0),
            estimate_k: false,
            fit: FitConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.s > self.p {
            return Err(FaplmError::InvalidConfig("s must not exceed p".into()));
        }
        if self.n_reps == 0 {
            return Err(FaplmError::InvalidConfig("n_reps must be at least 1".into()));
        }
        if !(self.sigma_eps2 > 0.0) {
            return Err(FaplmError::InvalidConfig("sigma_eps2 must be positive".into()));
        }
        if self.n < 2 || self.p == 0 {
            return Err(FaplmError::InvalidConfig("need n >= 2 and p >= 1".into()));
        }
        Ok(())
    }

    pub fn beta0(&self) -> Array1<f64> {
        Array1::from_shape_fn(self.p, |j| if j < self.s { self.signal } else { 0.0 })
    }

    fn pipeline_for_method(&self) -> PipelineConfig {
        let k = if self.method == MethodKind::Plm {
            KRule::Fixed(0)
        } else if self.estimate_k {
            KRule::Auto { k_max: None }
        } else {
            KRule::Fixed(self.k_true)
        };
        let mut fit = self.fit.clone();
        fit.rng = self.rng;
        PipelineConfig {
            k,
            linear_in_z: self.method == MethodKind::Falm,
            fit,
            ..Default::default()
        }
    }
}

/// Draws replication `rep_index` of the configured design. Each
/// replication has its own substream, so any subset of replications
/// reproduces the corresponding entries of a full run.
pub fn simulate_dataset(cfg: &SimulationConfig, rep_index: u64) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let mut rng = cfg.rng.substream(StreamKind::Simulation, rep_index);
    let (n, p, k) = (cfg.n, cfg.p, cfg.k_true);
    let unit = Uniform::new(0.0_f64, 1.0);
    let signed_unit = Uniform::new_inclusive(-1.0_f64, 1.0);

    let f = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
    let u = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let loading_b = Array2::from_shape_fn((p, k), |_| rng.sample(signed_unit));
    let z = Array1::from_shape_fn(n, |_| rng.sample(unit));
    let sigma = cfg.sigma_eps2.sqrt();
    let varepsilon = Array1::from_shape_fn(n, |_| sigma * rng.sample::<f64, _>(StandardNormal));

    let beta0 = cfg.beta0();
    let phi0 = loading_b.t().dot(&beta0);
    let g0_values = z.mapv(|v| cfg.link.g0(v));
    let x = f.dot(&loading_b.t()) + &u;
    let y = u.dot(&beta0) + f.dot(&phi0) + &g0_values + &varepsilon;

    Ok((
        Dataset { y, x, z },
        GroundTruth {
            beta0,
            g0_values,
            varepsilon,
            f,
            u,
            loading_b,
            sigma_eps2: cfg.sigma_eps2,
        },
    ))
}

/// Per-replication record of the estimation study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationRep {
    pub rep: usize,
    pub l1_error: f64,
    pub l2_error: f64,
    pub g_rmse: f64,
    pub sigma_hat2: f64,
    pub lambda_used: f64,
    pub k_used: usize,
}

/// Aggregated estimation metrics with Monte Carlo standard errors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config_label: String,
    pub l1_errors: Vec<f64>,
    pub l2_errors: Vec<f64>,
    pub g_rmse: Vec<f64>,
    pub mean_l1: f64,
    pub se_l1: f64,
    pub mean_l2: f64,
    pub se_l2: f64,
    pub mean_rmse: f64,
    pub se_rmse: f64,
    pub replications: Vec<EstimationRep>,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the estimation study: simulate, fit by the chosen method, record
/// `‖β̂ − β₀‖₁` and the in-sample RMSE of `ĝ`.
pub fn run_estimation_study(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let pipeline = cfg.pipeline_for_method();
    let reps: Result<Vec<EstimationRep>> = (0..cfg.n_reps)
        .into_par_iter()
        .map(|rep| {
            let (dataset, truth) = simulate_dataset(cfg, rep as u64)?;
            let mut pl = pipeline.clone();
            pl.fit.rng = cfg.rng.substream_spec(rep as u64);
            let model = fit_model(dataset, &pl)?;
            let l1 = model
                .fit
                .beta_hat
                .iter()
                .zip(truth.beta0.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>();
            let l2 = model
                .fit
                .beta_hat
                .iter()
                .zip(truth.beta0.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let g_rmse = (model
                .fit
                .g_hat_values
                .iter()
                .zip(truth.g0_values.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / cfg.n as f64)
                .sqrt();
            let phi_tilde = {
                let spline_part = model.pi.dot(&model.fit.xi_hat);
                model.decomp.f_hat.t().dot(&(&model.y - &spline_part)) / cfg.n as f64
            };
            let nv = inference::estimate_noise_variance(
                &model.fit,
                &model.decomp,
                model.pi.view(),
                model.y.view(),
                phi_tilde.view(),
            );
            Ok(EstimationRep {
                rep,
                l1_error: l1,
                l2_error: l2,
                g_rmse,
                sigma_hat2: nv.value,
                lambda_used: model.fit.lambda_used,
                k_used: model.provenance.k_used,
            })
        })
        .collect();
    let replications = reps?;
    let l1_errors: Vec<f64> = replications.iter().map(|r| r.l1_error).collect();
    let l2_errors: Vec<f64> = replications.iter().map(|r| r.l2_error).collect();
    let g_rmse: Vec<f64> = replications.iter().map(|r| r.g_rmse).collect();
    let (mean_l1, se_l1) = mean_se(&l1_errors);
    let (mean_l2, se_l2) = mean_se(&l2_errors);
    let (mean_rmse, se_rmse) = mean_se(&g_rmse);
    Ok(SimulationReport {
        config_label: format!(
            "{:?} {:?} n={} p={} reps={}",
            cfg.method, cfg.link, cfg.n, cfg.p, cfg.n_reps
        ),
        l1_errors,
        l2_errors,
        g_rmse,
        mean_l1,
        se_l1,
        mean_l2,
        se_l2,
        mean_rmse,
        se_rmse,
        replications,
    })
}

/// Per-replication record of the power study.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerRep {
    pub omega: f64,
    pub rep: usize,
    pub t_n: f64,
    pub c_hat: f64,
    pub p_value: f64,
    pub reject: bool,
}

/// One row of the power table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerRow {
    pub omega: f64,
    pub rejection_rate: f64,
    pub n_reps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PowerReport {
    pub rows: Vec<PowerRow>,
    pub replications: Vec<PowerRep>,
    pub alpha: f64,
    pub n_boot: usize,
}

/// Rejection frequencies across the signal grid; the ω = 0 row is the
/// empirical size. The grid must contain 0.
pub fn run_power_study(
    cfg: &SimulationConfig,
    omega_grid: &[f64],
    alpha: f64,
    n_boot: usize,
) -> Result<PowerReport> {
    cfg.validate()?;
    if !omega_grid.iter().any(|&w| w == 0.0) {
        return Err(FaplmError::InvalidConfig(
            "omega grid must include 0 (the size row)".into(),
        ));
    }
    if omega_grid.iter().any(|&w| w < 0.0) {
        return Err(FaplmError::InvalidConfig("omega must be nonnegative".into()));
    }
    let mut rows = Vec::with_capacity(omega_grid.len());
    let mut replications = Vec::new();
    for (wi, &omega) in omega_grid.iter().enumerate() {
        let mut sub = cfg.clone();
        sub.signal = omega;
        // Separate data streams per grid point.
        sub.rng = cfg.rng.substream_spec(1_000_000 + wi as u64);
        let reps: Result<Vec<PowerRep>> = (0..cfg.n_reps)
            .into_par_iter()
            .map(|rep| {
                let (dataset, _) = simulate_dataset(&sub, rep as u64)?;
                let test_cfg = TestConfig {
                    pipeline: sub.pipeline_for_method(),
                    delta: DeltaChoice::Auto,
                    n_boot,
                    alpha,
                    rng: sub.rng.substream_spec(rep as u64),
                };
                let run = inference::run_test(dataset, &test_cfg)?;
                Ok(PowerRep {
                    omega,
                    rep,
                    t_n: run.result.t_n,
                    c_hat: run.result.c_hat,
                    p_value: run.result.p_value,
                    reject: run.result.reject,
                })
            })
            .collect();
        let reps = reps?;
        let rate = reps.iter().filter(|r| r.reject).count() as f64 / cfg.n_reps as f64;
        rows.push(PowerRow { omega, rejection_rate: rate, n_reps: cfg.n_reps });
        replications.extend(reps);
    }
    Ok(PowerReport { rows, replications, alpha, n_boot })
}
