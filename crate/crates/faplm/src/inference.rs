//! Projection-debiased inference for the global null `β = 0`.
//!
//! The penalized estimate is corrected by
//! `β̃ = β̂ + n⁻¹ Θ̂ Ũᵀ (Y − Ûβ̂ − F̂φ̃ − Πξ̂)` with
//! `φ̃ = n⁻¹F̂ᵀ(Y − Πξ̂)`, the statistic is
//! `T_n = √n ‖β̃‖∞ / σ̂_ε`, and the critical value is the empirical
//! `(1−α)`-quantile of the multiplier bootstrap draws
//! `L̂ = n^{-1/2} ‖Θ̂ Ũᵀ υ‖∞`, `υ ~ N(0, I_n)`.

use ndarray::{Array1, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{FaplmError, Result};
use crate::factors::FactorDecomposition;
use crate::linalg::max_abs_vec;
use crate::precision::{
    compute_surrogates_for_design, estimate_precision, DeltaRule, PrecisionEstimate, Surrogates,
};
use crate::regression::{fit_model, FitResult, FittedModel, PipelineConfig};
use crate::rng::{RngSpec, StreamKind};

/// Radius choice exposed to callers; the sample sizes for the auto rule
/// are filled in by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaChoice {
    Fixed(f64),
    Auto,
}

/// Configuration of the full testing pipeline.
#[derive(Debug, Clone)]
pub struct TestConfig {
    pub pipeline: PipelineConfig,
    pub delta: DeltaChoice,
    pub n_boot: usize,
    pub alpha: f64,
    pub rng: RngSpec,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            delta: DeltaChoice::Auto,
            n_boot: 2000,
            alpha: 0.05,
            rng: RngSpec::new(0, 0),
        }
    }
}

/// Outcome of the significance test.
#[derive(Debug, Clone)]
pub struct InferenceResult {
    pub beta_tilde: Array1<f64>,
    pub phi_tilde: Array1<f64>,
    pub sigma_eps_hat2: f64,
    pub t_n: f64,
    pub c_hat: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub n_boot: usize,
    pub boot_samples: Array1<f64>,
}

/// Tuning values resolved while running the pipeline.
#[derive(Debug, Clone, Default)]
pub struct TestProvenance {
    pub k_used: usize,
    pub k_ratio_sequence: Option<Vec<f64>>,
    pub lambda_used: f64,
    pub cv_curve: Option<Vec<(f64, f64)>>,
    pub basis_dim: usize,
    pub delta_used: f64,
    pub delta_doublings: usize,
    pub feasibility_margin: f64,
}

/// Debiased estimates: `φ̃` first, then the one-step correction of `β̂`.
pub fn debias(
    fit: &FitResult,
    decomp: &FactorDecomposition,
    surr: &Surrogates,
    prec: &PrecisionEstimate,
    pi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = y.len();
    if decomp.n() != n || pi.nrows() != n || surr.u_tilde.nrows() != n {
        return Err(FaplmError::DimensionMismatch {
            context: "debias inputs share n",
            expected: n,
            got: decomp.n(),
        });
    }
    let nf = n as f64;
    let spline_part = pi.dot(&fit.xi_hat);
    let phi_tilde = decomp.f_hat.t().dot(&(&y.to_owned() - &spline_part)) / nf;
    let residual =
        &y.to_owned() - &decomp.u_hat.dot(&fit.beta_hat) - decomp.f_hat.dot(&phi_tilde) - spline_part;
    let correction = prec.theta_hat.dot(&surr.u_tilde.t().dot(&residual)) / nf;
    let beta_tilde = &fit.beta_hat + &correction;
    Ok((beta_tilde, phi_tilde))
}

/// Mean squared residual with the debiased factor coefficients.
#[derive(Debug, Clone, Copy)]
pub struct NoiseVariance {
    pub value: f64,
    /// Exact interpolation: the test statistic is undefined downstream.
    pub degenerate: bool,
}

pub fn estimate_noise_variance(
    fit: &FitResult,
    decomp: &FactorDecomposition,
    pi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    phi_tilde: ArrayView1<'_, f64>,
) -> NoiseVariance {
    let n = y.len() as f64;
    let residual = &y.to_owned()
        - &decomp.u_hat.dot(&fit.beta_hat)
        - decomp.f_hat.dot(&phi_tilde)
        - pi.dot(&fit.xi_hat);
    let value = residual.dot(&residual) / n;
    NoiseVariance { value, degenerate: value == 0.0 }
}

/// Multiplier bootstrap: replication `b` draws its own substream, so the
/// sample vector is identical under serial and parallel execution.
pub fn bootstrap_critical_value(
    prec: &PrecisionEstimate,
    surr: &Surrogates,
    n_boot: usize,
    alpha: f64,
    rng: &RngSpec,
) -> Result<(f64, Array1<f64>)> {
    if n_boot == 0 {
        return Err(FaplmError::InvalidConfig("n_boot must be at least 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(FaplmError::InvalidConfig("alpha must lie in (0, 1)".into()));
    }
    let n = surr.u_tilde.nrows();
    let nf = n as f64;
    // p×n map applied to each multiplier vector.
    let map = prec.theta_hat.dot(&surr.u_tilde.t());
    let samples: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut r = rng.substream(StreamKind::Bootstrap, b as u64);
            let v = Array1::from_shape_fn(n, |_| r.sample::<f64, _>(StandardNormal));
            max_abs_vec(map.dot(&v).view()) / nf.sqrt()
        })
        .collect();
    let boot_samples = Array1::from_vec(samples);
    let c_hat = empirical_quantile(boot_samples.view(), alpha);
    Ok((c_hat, boot_samples))
}

/// `inf{t ≥ 0 : H_B(t) ≥ 1−α}` — the `⌈(1−α)B⌉`-th order statistic.
pub fn empirical_quantile(samples: ArrayView1<'_, f64>, alpha: f64) -> f64 {
    let b = samples.len();
    let mut sorted: Vec<f64> = samples.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("finite bootstrap samples"));
    let rank = ((1.0 - alpha) * b as f64).ceil() as usize;
    sorted[rank.clamp(1, b) - 1]
}

/// Full pipeline bundle for callers that need the intermediates.
pub struct TestRun {
    pub model: FittedModel,
    pub surrogates: Surrogates,
    pub precision: PrecisionEstimate,
    pub result: InferenceResult,
    pub provenance: TestProvenance,
}

/// Runs factors → basis → fit → surrogates → precision → debias →
/// variance → bootstrap and assembles the decision.
pub fn run_test(dataset: Dataset, cfg: &TestConfig) -> Result<TestRun> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(FaplmError::InvalidConfig("alpha must lie in (0, 1)".into()));
    }
    if cfg.n_boot == 0 {
        return Err(FaplmError::InvalidConfig("n_boot must be at least 1".into()));
    }
    let mut pipeline_cfg = cfg.pipeline.clone();
    pipeline_cfg.fit.rng = cfg.rng;
    let model = fit_model(dataset, &pipeline_cfg)?;
    let n = model.pi.nrows();

    let surrogates = compute_surrogates_for_design(&model.decomp, model.pi.clone())?;
    let rule = match cfg.delta {
        DeltaChoice::Fixed(d) => DeltaRule::Fixed(d),
        DeltaChoice::Auto => DeltaRule::Auto { n, basis_dim: model.pi.ncols() },
    };
    let precision = estimate_precision(&surrogates.sigma_tilde, rule)?;

    let y = model.y.clone();
    let (beta_tilde, phi_tilde) = debias(
        &model.fit,
        &model.decomp,
        &surrogates,
        &precision,
        model.pi.view(),
        y.view(),
    )?;
    let noise = estimate_noise_variance(
        &model.fit,
        &model.decomp,
        model.pi.view(),
        y.view(),
        phi_tilde.view(),
    );
    if noise.degenerate {
        return Err(FaplmError::DegenerateNoiseVariance);
    }
    let t_n = (n as f64).sqrt() * max_abs_vec(beta_tilde.view()) / noise.value.sqrt();
    let (c_hat, boot_samples) =
        bootstrap_critical_value(&precision, &surrogates, cfg.n_boot, cfg.alpha, &cfg.rng)?;
    let p_value = boot_samples.iter().filter(|&&l| l >= t_n).count() as f64 / cfg.n_boot as f64;
    let reject = t_n >= c_hat;

    let provenance = TestProvenance {
        k_used: model.provenance.k_used,
        k_ratio_sequence: model.provenance.k_ratio_sequence.clone(),
        lambda_used: model.provenance.lambda_used,
        cv_curve: model.provenance.cv_curve.clone(),
        basis_dim: model.provenance.basis_dim,
        delta_used: precision.delta_n,
        delta_doublings: precision.doubling_count,
        feasibility_margin: precision.feasibility_margin,
    };
    let result = InferenceResult {
        beta_tilde,
        phi_tilde,
        sigma_eps_hat2: noise.value,
        t_n,
        c_hat,
        p_value,
        reject,
        alpha: cfg.alpha,
        n_boot: cfg.n_boot,
        boot_samples,
    };
    Ok(TestRun { model, surrogates, precision, result, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors;
    use crate::precision::symmetrize;
    use crate::regression::{FitConfig, KRule};
    use crate::splines::SplineBasis;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn unit_precision(p: usize) -> PrecisionEstimate {
        let theta = Array2::eye(p);
        let (theta_hat, from_transpose) = symmetrize(&theta);
        PrecisionEstimate {
            theta_hat,
            theta_presym: Array2::eye(p),
            from_transpose,
            delta_n: 0.1,
            feasibility_margin: 0.0,
            per_row_l1: Array1::ones(p),
            doubling_count: 0,
        }
    }

    #[test]
    fn single_bootstrap_draw_is_its_own_quantile() {
        let samples = array![1.37];
        for alpha in [0.01, 0.05, 0.5, 0.99] {
            assert_eq!(empirical_quantile(samples.view(), alpha), 1.37);
        }
    }

    #[test]
    fn quantile_is_the_correct_order_statistic() {
        let samples = array![5.0, 1.0, 3.0, 2.0, 4.0];
        // ceil(0.95·5) = 5th order statistic.
        assert_eq!(empirical_quantile(samples.view(), 0.05), 5.0);
        // ceil(0.5·5) = 3rd.
        assert_eq!(empirical_quantile(samples.view(), 0.5), 3.0);
        // Monotone in alpha.
        let mut last = f64::INFINITY;
        for alpha in [0.05, 0.1, 0.25, 0.5, 0.75, 0.9] {
            let q = empirical_quantile(samples.view(), alpha);
            assert!(q <= last);
            last = q;
        }
    }

    #[test]
    fn zero_map_gives_zero_critical_value() {
        let p = 3;
        let n = 10;
        let surr = Surrogates {
            u_tilde: Array2::zeros((n, p)),
            sigma_tilde: Array2::zeros((p, p)),
        };
        let prec = unit_precision(p);
        let (c, samples) =
            bootstrap_critical_value(&prec, &surr, 32, 0.05, &RngSpec::new(1, 0)).unwrap();
        assert_eq!(c, 0.0);
        assert!(samples.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn half_normal_quantile_recovered() {
        // p = 1, Ũ a unit column scaled to ‖Ũ‖₂ = √n, Θ̂ = [1]:
        // L̂ ~ |N(0,1)| so the 95% quantile is near 1.96.
        let n = 64;
        let mut u = Array2::zeros((n, 1));
        for i in 0..n {
            u[[i, 0]] = 1.0; // ‖Ũ‖₂² = n
        }
        let surr = Surrogates { u_tilde: u, sigma_tilde: Array2::eye(1) };
        let prec = unit_precision(1);
        let (c, _) =
            bootstrap_critical_value(&prec, &surr, 20_000, 0.05, &RngSpec::new(7, 0)).unwrap();
        assert!((c - 1.96).abs() < 0.1, "c = {c}");
    }

    #[test]
    fn bootstrap_identical_serial_and_parallel() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let n = 30;
        let p = 6;
        let u = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let sigma = u.t().dot(&u) / n as f64;
        let surr = Surrogates { u_tilde: u, sigma_tilde: sigma };
        let prec = unit_precision(p);
        let spec = RngSpec::new(5, 2);
        let serial_pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (c1, s1) = serial_pool
            .install(|| bootstrap_critical_value(&prec, &surr, 256, 0.1, &spec))
            .unwrap();
        let (c2, s2) = bootstrap_critical_value(&prec, &surr, 256, 0.1, &spec).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn rejects_bad_alpha_and_boot() {
        let surr = Surrogates {
            u_tilde: Array2::zeros((4, 2)),
            sigma_tilde: Array2::zeros((2, 2)),
        };
        let prec = unit_precision(2);
        assert!(bootstrap_critical_value(&prec, &surr, 0, 0.05, &RngSpec::new(0, 0)).is_err());
        assert!(bootstrap_critical_value(&prec, &surr, 10, 1.0, &RngSpec::new(0, 0)).is_err());
    }

    #[test]
    fn zero_residual_leaves_beta_unchanged() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let n = 40;
        let p = 6;
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let decomp = factors::estimate_factors(&x, 1).unwrap();
        let z = Array1::from_shape_fn(n, |_| rng.gen::<f64>());
        let basis = SplineBasis::build(n, None, None).unwrap();
        let pi = basis.evaluate(z.view()).unwrap().values;

        let beta = Array1::from_shape_fn(p, |j| if j == 0 { 1.5 } else { 0.0 });
        let xi = Array1::from_shape_fn(pi.ncols(), |_| rng.gen::<f64>());
        // Build y so the debias residual is exactly zero: φ̃ must equal
        // the φ used to construct y, which holds when F̂ᵀ(Ûβ) = 0.
        let phi = array![0.7];
        let y = decomp.u_hat.dot(&beta) + decomp.f_hat.dot(&phi) + pi.dot(&xi);

        let fit = FitResult {
            beta_hat: beta.clone(),
            xi_hat: xi,
            phi_hat: phi,
            lambda_used: 0.0,
            n_iterations: 0,
            converged: true,
            g_hat_values: Array1::zeros(n),
            objective_value: 0.0,
        };
        let surr = Surrogates {
            u_tilde: decomp.u_hat.clone(),
            sigma_tilde: decomp.u_hat.t().dot(&decomp.u_hat) / n as f64,
        };
        let prec = unit_precision(p);
        let (beta_tilde, _) =
            debias(&fit, &decomp, &surr, &prec, pi.view(), y.view()).unwrap();
        for (a, b) in beta_tilde.iter().zip(beta.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_residual_variance_and_degenerate_flag() {
        let n = 25;
        let p = 3;
        let x = Array2::zeros((n, p));
        let decomp = factors::FactorDecomposition::without_factors(&x);
        let pi = Array2::zeros((n, 2));
        let fit = FitResult {
            beta_hat: Array1::zeros(p),
            xi_hat: Array1::zeros(2),
            phi_hat: Array1::zeros(0),
            lambda_used: 0.0,
            n_iterations: 0,
            converged: true,
            g_hat_values: Array1::zeros(n),
            objective_value: 0.0,
        };
        let r = 0.3;
        let y = Array1::from_elem(n, r);
        let nv = estimate_noise_variance(&fit, &decomp, pi.view(), y.view(), Array1::zeros(0).view());
        assert!((nv.value - r * r).abs() < 1e-14);
        assert!(!nv.degenerate);

        let y0 = Array1::zeros(n);
        let nv0 = estimate_noise_variance(&fit, &decomp, pi.view(), y0.view(), Array1::zeros(0).view());
        assert_eq!(nv0.value, 0.0);
        assert!(nv0.degenerate);
    }

    #[test]
    fn interpolating_fit_aborts_the_test() {
        // A response the fit reproduces exactly leaves σ̂² = 0, which
        // must abort instead of reporting T_n = ∞.
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        let n = 12;
        let x = Array2::from_shape_fn((n, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let z = Array1::from_shape_fn(n, |i| i as f64 / (n - 1) as f64);
        let y = Array1::zeros(n);
        let cfg = TestConfig {
            pipeline: PipelineConfig {
                k: KRule::Fixed(0),
                fit: FitConfig::with_fixed_lambda(0.1),
                ..Default::default()
            },
            n_boot: 8,
            ..Default::default()
        };
        match run_test(Dataset { y, x, z }, &cfg) {
            Err(FaplmError::DegenerateNoiseVariance) => {}
            other => panic!("expected degenerate variance, got {:?}", other.map(|r| r.result.t_n)),
        }
    }
}
