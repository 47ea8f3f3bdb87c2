//! Penalized estimation of the linear coefficients.
//!
//! The joint objective
//!
//! ```text
//! (1/2n) ‖Y − Û β − F̂ φ − Π ξ‖₂² + λ ‖β‖₁
//! ```
//!
//! is minimized by alternating an exact least-squares update of the
//! unpenalized block `(φ, ξ)` with cyclic soft-thresholded coordinate
//! descent on `β`. Because `F̂ᵀÛ = 0` and `n⁻¹F̂ᵀF̂ = I`, the joint
//! solution coincides with the profiled form in which `β` is fit on the
//! factor-projected data and `φ = n⁻¹F̂ᵀ(Y − Πξ)`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{rescale_z_to_unit, validate_dataset, AffineMap, Dataset};
use crate::error::{FaplmError, Result};
use crate::factors::{self, FactorDecomposition};
use crate::linalg::SpdSolver;
use crate::rng::{RngSpec, StreamKind};
use crate::splines::{KnotPlacement, SplineBasis};

/// Penalty selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaRule {
    Fixed(f64),
    CrossValidated,
}

/// Tuning knobs for the penalized fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: LambdaRule,
    /// Grid for cross-validation; defaults to `√(log p / n) · 2^{-4..=2}`.
    pub lambda_grid: Option<Vec<f64>>,
    pub cv_folds: usize,
    pub max_iter: usize,
    /// Convergence threshold on the max coefficient change per sweep.
    pub tol: f64,
    /// Drives the fold shuffle; fits themselves are deterministic.
    pub rng: RngSpec,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: LambdaRule::CrossValidated,
            lambda_grid: None,
            cv_folds: 5,
            max_iter: 10_000,
            tol: 1e-7,
            rng: RngSpec::new(0, 0),
        }
    }
}

impl FitConfig {
    pub fn with_fixed_lambda(lambda: f64) -> Self {
        Self { lambda: LambdaRule::Fixed(lambda), ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.tol <= 0.0 || !self.tol.is_finite() {
            return Err(FaplmError::InvalidConfig("tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(FaplmError::InvalidConfig("max_iter must be at least 1".into()));
        }
        if let LambdaRule::Fixed(l) = self.lambda {
            if !(l >= 0.0) {
                return Err(FaplmError::InvalidConfig("lambda must be nonnegative".into()));
            }
        }
        if let Some(grid) = &self.lambda_grid {
            if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0)) {
                return Err(FaplmError::InvalidConfig(
                    "lambda grid must be nonempty and positive".into(),
                ));
            }
        }
        if self.cv_folds < 2 {
            return Err(FaplmError::InvalidConfig("cv_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// Grid anchor `√(log p / n)` matching the theoretical penalty rate.
pub fn lambda_anchor(n: usize, p: usize) -> f64 {
    ((p as f64).ln() / n as f64).sqrt()
}

/// Default cross-validation grid, ascending.
pub fn default_lambda_grid(n: usize, p: usize) -> Vec<f64> {
    let anchor = lambda_anchor(n, p);
    (-4..=2).map(|k| anchor * (k as f64).exp2()).collect()
}

/// Output of the penalized fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub beta_hat: Array1<f64>,
    pub xi_hat: Array1<f64>,
    pub phi_hat: Array1<f64>,
    pub lambda_used: f64,
    pub n_iterations: usize,
    pub converged: bool,
    /// `ĝ(Z_i) = π_iᵀ ξ̂` at the training points.
    pub g_hat_values: Array1<f64>,
    pub objective_value: f64,
}

/// Smooth (unpenalized, beyond the factor block) part of the design.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SmoothDesign {
    /// Normalized B-spline system.
    Spline(SplineBasis),
    /// Intercept plus linear term in z; the misspecified baseline that
    /// treats the nonparametric component as linear.
    InterceptLinear,
}

impl SmoothDesign {
    /// Design columns at the (rescaled) covariate values.
    pub fn evaluate(&self, z01: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        match self {
            SmoothDesign::Spline(basis) => Ok(basis.evaluate(z01)?.values),
            SmoothDesign::InterceptLinear => {
                let mut m = Array2::ones((z01.len(), 2));
                m.column_mut(1).assign(&z01);
                Ok(m)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothDesign::Spline(b) => b.basis_dim(),
            SmoothDesign::InterceptLinear => 2,
        }
    }
}

/// Fits the penalized objective for a given decomposition and basis
/// matrix. `pi` carries the smooth design evaluated at the sample points.
pub fn fit_faplm(
    decomp: &FactorDecomposition,
    pi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &FitConfig,
) -> Result<FitResult> {
    cfg.validate()?;
    let n = y.len();
    if decomp.n() != n || pi.nrows() != n {
        return Err(FaplmError::DimensionMismatch {
            context: "fit inputs share n",
            expected: n,
            got: decomp.n().max(pi.nrows()),
        });
    }
    let (lambda, _) = match cfg.lambda {
        LambdaRule::Fixed(l) => (l, None),
        LambdaRule::CrossValidated => {
            let cv = select_lambda_cv(decomp, pi, y, cfg)?;
            (cv.lambda, Some(cv))
        }
    };
    fit_at_lambda(decomp, pi, y, lambda, cfg)
}

/// Fit at a fixed penalty level (the λ actually used is recorded).
pub fn fit_at_lambda(
    decomp: &FactorDecomposition,
    pi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    lambda: f64,
    cfg: &FitConfig,
) -> Result<FitResult> {
    let k = decomp.k;
    let smooth = stack_smooth(&decomp.f_hat, pi);
    let core = BlockProblem::new(decomp.u_hat.view(), smooth.view(), y)?;
    let sol = core.solve(lambda, cfg.max_iter, cfg.tol, None);
    let phi_hat = sol.theta.slice(s![..k]).to_owned();
    let xi_hat = sol.theta.slice(s![k..]).to_owned();
    let g_hat_values = pi.dot(&xi_hat);
    Ok(FitResult {
        beta_hat: sol.beta,
        xi_hat,
        phi_hat,
        lambda_used: lambda,
        n_iterations: sol.n_iter,
        converged: sol.converged,
        g_hat_values,
        objective_value: sol.objective,
    })
}

/// `[F̂ | Π]`, the unpenalized block of the design.
fn stack_smooth(f_hat: &Array2<f64>, pi: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = pi.nrows();
    let k = f_hat.ncols();
    let m = pi.ncols();
    let mut s = Array2::zeros((n, k + m));
    if k > 0 {
        s.slice_mut(ndarray::s![.., ..k]).assign(f_hat);
    }
    s.slice_mut(ndarray::s![.., k..]).assign(&pi);
    s
}

/// Smallest penalty at which the lasso block is identically zero:
/// `max_j |n⁻¹ Û_jᵀ r₀|` with `r₀` the residual of `y` on the smooth
/// block alone.
pub fn lambda_max(
    decomp: &FactorDecomposition,
    pi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
) -> Result<f64> {
    let smooth = stack_smooth(&decomp.f_hat, pi);
    let core = BlockProblem::new(decomp.u_hat.view(), smooth.view(), y)?;
    Ok(core.lambda_max())
}

/// Maximum violation of the stationarity conditions at `(β, θ)`:
/// the smooth-block normal equations and the lasso subgradient bounds,
/// both in `n⁻¹ Xᵀr` units.
pub fn kkt_max_violation(
    u: ArrayView2<'_, f64>,
    smooth: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    beta: ArrayView1<'_, f64>,
    theta: ArrayView1<'_, f64>,
    lambda: f64,
) -> f64 {
    let n = y.len() as f64;
    let r = &y.to_owned() - &u.dot(&beta) - smooth.dot(&theta);
    let mut worst = 0.0_f64;
    for col in smooth.axis_iter(Axis(1)) {
        worst = worst.max((col.dot(&r) / n).abs());
    }
    for (j, col) in u.axis_iter(Axis(1)).enumerate() {
        let g = col.dot(&r) / n;
        let v = if beta[j] == 0.0 {
            (g.abs() - lambda).max(0.0)
        } else {
            (g - lambda * beta[j].signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

struct BlockSolution {
    beta: Array1<f64>,
    theta: Array1<f64>,
    n_iter: usize,
    converged: bool,
    objective: f64,
}

/// The working problem: penalized columns `u`, unpenalized columns
/// `smooth`, response `y`. Keeps `u` transposed for contiguous column
/// access in the descent sweeps.
struct BlockProblem {
    u_t: Array2<f64>,
    smooth: Array2<f64>,
    y: Array1<f64>,
    col_norms2: Vec<f64>,
    gram_smooth: Array2<f64>,
    solver: SpdSolver,
}

impl BlockProblem {
    fn new(
        u: ArrayView2<'_, f64>,
        smooth: ArrayView2<'_, f64>,
        y: ArrayView1<'_, f64>,
    ) -> Result<Self> {
        let n = y.len() as f64;
        let gram_smooth = smooth.t().dot(&smooth);
        let (eigs, _) = crate::linalg::sym_eigen_desc(gram_smooth.view())?;
        let ratio = if eigs[0] > 0.0 { eigs[eigs.len() - 1] / eigs[0] } else { 0.0 };
        if !(ratio > 1e-10) {
            return Err(FaplmError::RankDeficientSmoothBlock);
        }
        let solver =
            SpdSolver::new(gram_smooth.view()).ok_or(FaplmError::RankDeficientSmoothBlock)?;
        let col_norms2 = u
            .axis_iter(Axis(1))
            .map(|c| c.dot(&c) / n)
            .collect();
        Ok(Self {
            u_t: u.t().to_owned().as_standard_layout().to_owned(),
            smooth: smooth.to_owned(),
            y: y.to_owned(),
            col_norms2,
            gram_smooth,
            solver,
        })
    }

    fn p(&self) -> usize {
        self.u_t.nrows()
    }

    fn lambda_max(&self) -> f64 {
        let n = self.y.len() as f64;
        let theta0 = self.solver.solve(self.smooth.t().dot(&self.y).view());
        let r0 = &self.y - &self.smooth.dot(&theta0);
        (0..self.p())
            .map(|j| (self.u_t.row(j).dot(&r0) / n).abs())
            .fold(0.0_f64, f64::max)
    }

    /// Alternates one β sweep with an exact θ solve until the largest
    /// coefficient change falls below `tol`. Ends on a θ solve, so the
    /// smooth-block normal equations hold exactly at the returned point.
    fn solve(
        &self,
        lambda: f64,
        max_iter: usize,
        tol: f64,
        warm: Option<(&Array1<f64>, &Array1<f64>)>,
    ) -> BlockSolution {
        let n = self.y.len() as f64;
        let p = self.p();
        let (mut beta, mut theta) = match warm {
            Some((b, t)) => (b.clone(), t.clone()),
            None => (
                Array1::zeros(p),
                Array1::zeros(self.smooth.ncols()),
            ),
        };
        let mut r = &self.y - &self.smooth.dot(&theta);
        for j in 0..p {
            if beta[j] != 0.0 {
                r.scaled_add(-beta[j], &self.u_t.row(j));
            }
        }

        let mut converged = false;
        let mut n_iter = 0;
        while n_iter < max_iter {
            n_iter += 1;
            let mut max_delta = 0.0_f64;

            for j in 0..p {
                let norm2 = self.col_norms2[j];
                if norm2 <= 0.0 {
                    continue;
                }
                let col = self.u_t.row(j);
                let z = col.dot(&r) / n + norm2 * beta[j];
                let new = soft_threshold(z, lambda) / norm2;
                let delta = new - beta[j];
                if delta != 0.0 {
                    r.scaled_add(-delta, &col);
                    beta[j] = new;
                    max_delta = max_delta.max(delta.abs());
                }
            }

            // Exact least squares on the unpenalized block given β:
            // rhs = Sᵀ(y − Uβ) = Sᵀ r + (SᵀS) θ.
            let rhs = self.smooth.t().dot(&r) + self.gram_smooth.dot(&theta);
            let theta_new = self.solver.solve(rhs.view());
            let mut smooth_delta = 0.0_f64;
            for (a, b) in theta_new.iter().zip(theta.iter()) {
                smooth_delta = smooth_delta.max((a - b).abs());
            }
            let dtheta = &theta_new - &theta;
            r -= &self.smooth.dot(&dtheta);
            theta = theta_new;

            if n_iter % 64 == 0 {
                // Refresh the residual to stop incremental drift.
                r = &self.y - &self.smooth.dot(&theta);
                for j in 0..p {
                    if beta[j] != 0.0 {
                        r.scaled_add(-beta[j], &self.u_t.row(j));
                    }
                }
            }

            if max_delta.max(smooth_delta) < tol {
                converged = true;
                break;
            }
        }

        // Final exact residual for the reported objective.
        let mut r = &self.y - &self.smooth.dot(&theta);
        for j in 0..p {
            if beta[j] != 0.0 {
                r.scaled_add(-beta[j], &self.u_t.row(j));
            }
        }
        let objective = r.dot(&r) / (2.0 * n) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>();
        BlockSolution { beta, theta, n_iter, converged, objective }
    }

}

fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cross-validation output: chosen penalty and the error curve.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub lambda: f64,
    /// `(λ, mean held-out squared error)` in ascending λ order.
    pub curve: Vec<(f64, f64)>,
}

/// K-fold cross-validation over the penalty grid. Folds are contiguous
/// blocks of a seeded shuffle; the factor decomposition is treated as
/// given (not refit per fold). Ties in the error curve resolve toward
/// the largest penalty.
pub fn select_lambda_cv(
    decomp: &FactorDecomposition,
    pi: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    cfg: &FitConfig,
) -> Result<CvResult> {
    cfg.validate()?;
    let n = y.len();
    let folds = cfg.cv_folds;
    if n < 2 * folds {
        return Err(FaplmError::TooFewSamplesPerFold { n, folds });
    }
    let grid = match &cfg.lambda_grid {
        Some(g) => {
            let mut g = g.clone();
            g.sort_by(|a, b| a.partial_cmp(b).expect("finite lambda grid"));
            g
        }
        None => default_lambda_grid(n, decomp.p()),
    };

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = cfg.rng.substream(StreamKind::CrossValidation, 0);
    order.shuffle(&mut rng);

    let smooth = stack_smooth(&decomp.f_hat, pi);
    let mut fold_errors = vec![vec![0.0_f64; grid.len()]; folds];
    for f in 0..folds {
        let lo = f * n / folds;
        let hi = (f + 1) * n / folds;
        let val_idx = &order[lo..hi];
        let train_idx: Vec<usize> = order[..lo].iter().chain(order[hi..].iter()).cloned().collect();

        let u_train = decomp.u_hat.select(Axis(0), &train_idx);
        let s_train = smooth.select(Axis(0), &train_idx);
        let y_train = y.select(Axis(0), &train_idx);
        let core = BlockProblem::new(u_train.view(), s_train.view(), y_train.view())?;

        let u_val = decomp.u_hat.select(Axis(0), val_idx);
        let s_val = smooth.select(Axis(0), val_idx);
        let y_val = y.select(Axis(0), val_idx);

        // Warm-start down the grid (largest penalty first).
        let mut warm: Option<(Array1<f64>, Array1<f64>)> = None;
        for (gi, &lambda) in grid.iter().enumerate().rev() {
            let sol = core.solve(
                lambda,
                cfg.max_iter,
                cfg.tol,
                warm.as_ref().map(|(b, t)| (b, t)),
            );
            let pred = u_val.dot(&sol.beta) + s_val.dot(&sol.theta);
            let mse = y_val
                .iter()
                .zip(pred.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / val_idx.len() as f64;
            fold_errors[f][gi] = mse;
            warm = Some((sol.beta, sol.theta));
        }
    }

    let mut curve = Vec::with_capacity(grid.len());
    for (gi, &lambda) in grid.iter().enumerate() {
        // Combine in fold-index order for deterministic summation.
        let mean = fold_errors.iter().map(|fe| fe[gi]).sum::<f64>() / folds as f64;
        curve.push((lambda, mean));
    }
    let mut best = 0;
    for gi in 0..curve.len() {
        if curve[gi].1 <= curve[best].1 {
            best = gi; // ascending grid, so ties pick the largest λ
        }
    }
    Ok(CvResult { lambda: curve[best].0, curve })
}

/// How the number of factors is determined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KRule {
    /// Use exactly this many factors; 0 skips the factor step entirely.
    Fixed(usize),
    /// Eigenvalue-ratio selection up to `k_max` (default cap applies).
    Auto { k_max: Option<usize> },
}

/// Full fit configuration: factor rule, smooth design and penalty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: KRule,
    pub basis_order: Option<usize>,
    pub basis_internal_knots: Option<usize>,
    pub knot_placement: KnotPlacement,
    /// Replace the spline block by intercept + linear term (the FALM
    /// baseline).
    pub linear_in_z: bool,
    pub fit: FitConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: KRule::Auto { k_max: None },
            basis_order: None,
            basis_internal_knots: None,
            knot_placement: KnotPlacement::Uniform,
            linear_in_z: false,
            fit: FitConfig::default(),
        }
    }
}

/// Fitted model with everything needed for out-of-sample prediction.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub fit: FitResult,
    pub decomp: FactorDecomposition,
    pub smooth: SmoothDesign,
    pub z_map: AffineMap,
    /// Basis matrix at the training points.
    pub pi: Array2<f64>,
    /// Training response, kept for the inference stage.
    pub y: Array1<f64>,
    pub provenance: FitProvenance,
}

/// Tuning values resolved along the way, for reporting.
#[derive(Debug, Clone, Default)]
pub struct FitProvenance {
    pub k_used: usize,
    pub k_ratio_sequence: Option<Vec<f64>>,
    pub k_low_rank: bool,
    pub lambda_used: f64,
    pub cv_curve: Option<Vec<(f64, f64)>>,
    pub basis_dim: usize,
}

/// Runs validation, rescaling, factor estimation, basis construction and
/// the penalized fit.
pub fn fit_model(dataset: Dataset, cfg: &PipelineConfig) -> Result<FittedModel> {
    let d = validate_dataset(dataset)?;
    let (z01, z_map) = rescale_z_to_unit(&d.z)?;
    let n = d.n();

    let mut provenance = FitProvenance::default();
    let decomp = match cfg.k {
        KRule::Fixed(0) => FactorDecomposition::without_factors(&d.x),
        KRule::Fixed(k) => factors::estimate_factors(&d.x, k)?,
        KRule::Auto { k_max } => {
            let cap = k_max.unwrap_or_else(|| factors::default_k_max(n, d.p()));
            let sel = factors::select_num_factors(&d.x, cap)?;
            provenance.k_ratio_sequence = Some(sel.ratios.clone());
            provenance.k_low_rank = sel.low_rank;
            factors::estimate_factors(&d.x, sel.k_hat)?
        }
    };
    provenance.k_used = decomp.k;

    let smooth = if cfg.linear_in_z {
        SmoothDesign::InterceptLinear
    } else {
        let basis = match cfg.knot_placement {
            KnotPlacement::Uniform => {
                SplineBasis::build(n, cfg.basis_order, cfg.basis_internal_knots)?
            }
            KnotPlacement::ZQuantiles => {
                let order = cfg.basis_order.unwrap_or(crate::splines::DEFAULT_ORDER);
                let k_n = cfg
                    .basis_internal_knots
                    .unwrap_or_else(|| crate::splines::default_internal_knots(n));
                SplineBasis::with_z_quantile_knots(order, k_n, z01.view())?
            }
        };
        SmoothDesign::Spline(basis)
    };
    let pi = smooth.evaluate(z01.view())?;
    provenance.basis_dim = smooth.dim();

    let fit = match cfg.fit.lambda {
        LambdaRule::Fixed(l) => fit_at_lambda(&decomp, pi.view(), d.y.view(), l, &cfg.fit)?,
        LambdaRule::CrossValidated => {
            let cv = select_lambda_cv(&decomp, pi.view(), d.y.view(), &cfg.fit)?;
            provenance.cv_curve = Some(cv.curve.clone());
            fit_at_lambda(&decomp, pi.view(), d.y.view(), cv.lambda, &cfg.fit)?
        }
    };
    provenance.lambda_used = fit.lambda_used;

    Ok(FittedModel {
        fit,
        decomp,
        smooth,
        z_map,
        pi,
        y: d.y,
        provenance,
    })
}

/// Predictions on new data.
#[derive(Debug, Clone)]
pub struct PredictOutput {
    pub y_hat: Array1<f64>,
    /// Number of z values clamped into the training range.
    pub n_clamped: usize,
}

/// Predicts at new covariates. New factor scores come from projecting
/// onto the training loadings: `F_new = X_new B̂ (B̂ᵀB̂)⁻¹`,
/// `U_new = X_new − F_new B̂ᵀ`. Out-of-range z values are clamped into
/// the training range and counted.
pub fn predict(
    model: &FittedModel,
    x_new: ArrayView2<'_, f64>,
    z_new: ArrayView1<'_, f64>,
) -> Result<PredictOutput> {
    let p = model.decomp.p();
    if x_new.ncols() != p {
        return Err(FaplmError::DimensionMismatch {
            context: "x_new columns vs training p",
            expected: p,
            got: x_new.ncols(),
        });
    }
    if x_new.nrows() != z_new.len() {
        return Err(FaplmError::DimensionMismatch {
            context: "x_new rows vs z_new length",
            expected: z_new.len(),
            got: x_new.nrows(),
        });
    }
    let mut n_clamped = 0usize;
    let z01 = z_new.mapv(|z| {
        let t = model.z_map.forward(z);
        if !(0.0..=1.0).contains(&t) {
            n_clamped += 1;
        }
        t.clamp(0.0, 1.0)
    });
    let smooth_new = model.smooth.evaluate(z01.view())?;
    let mut y_hat = smooth_new.dot(&model.fit.xi_hat);

    if model.decomp.k > 0 {
        let b = &model.decomp.b_hat;
        let btb = b.t().dot(b);
        let solver = SpdSolver::new(btb.view()).ok_or(FaplmError::RankDeficientSmoothBlock)?;
        let xb = x_new.dot(b); // n_new × k
        let mut f_new = Array2::zeros(xb.dim());
        for (i, row) in xb.axis_iter(Axis(0)).enumerate() {
            f_new.row_mut(i).assign(&solver.solve(row));
        }
        let u_new = &x_new - &f_new.dot(&b.t());
        y_hat += &u_new.dot(&model.fit.beta_hat);
        y_hat += &f_new.dot(&model.fit.phi_hat);
    } else {
        y_hat += &x_new.dot(&model.fit.beta_hat);
    }
    Ok(PredictOutput { y_hat, n_clamped })
}

/// Fitted values at the training rows, `Û β̂ + F̂ φ̂ + Π ξ̂`.
pub fn fitted_values(model: &FittedModel) -> Array1<f64> {
    let mut out = model.pi.dot(&model.fit.xi_hat);
    out += &model.decomp.u_hat.dot(&model.fit.beta_hat);
    if model.decomp.k > 0 {
        out += &model.decomp.f_hat.dot(&model.fit.phi_hat);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::StandardNormal;

    fn seeded_problem(
        n: usize,
        p: usize,
        k: usize,
        seed: u64,
    ) -> (FactorDecomposition, Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let decomp = if k == 0 {
            FactorDecomposition::without_factors(&x)
        } else {
            factors::estimate_factors(&x, k).unwrap()
        };
        let z = Array1::from_shape_fn(n, |_| rng.gen::<f64>());
        let basis = SplineBasis::build(n, None, None).unwrap();
        let pi = basis.evaluate(z.view()).unwrap().values;
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        (decomp, pi, y)
    }

    #[test]
    fn lambda_above_max_gives_null_fit() {
        let (decomp, pi, y) = seeded_problem(60, 12, 2, 5);
        let lmax = lambda_max(&decomp, pi.view(), y.view()).unwrap();
        let cfg = FitConfig::with_fixed_lambda(lmax * 1.000001);
        let fit = fit_faplm(&decomp, pi.view(), y.view(), &cfg).unwrap();
        assert!(fit.beta_hat.iter().all(|&b| b == 0.0));
        // θ must equal the plain least-squares fit on the smooth block.
        let smooth = stack_smooth(&decomp.f_hat, pi.view());
        let solver = SpdSolver::new(smooth.t().dot(&smooth).view()).unwrap();
        let theta0 = solver.solve(smooth.t().dot(&y).view());
        let xi0 = theta0.slice(s![decomp.k..]);
        for (a, b) in fit.xi_hat.iter().zip(xi0.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn objective_is_recomputable_and_phi_closed_form_holds() {
        let (decomp, pi, y) = seeded_problem(80, 25, 3, 7);
        let cfg = FitConfig::with_fixed_lambda(0.05);
        let fit = fit_faplm(&decomp, pi.view(), y.view(), &cfg).unwrap();
        assert!(fit.converged);
        let n = y.len() as f64;
        let resid = &y
            - &decomp.u_hat.dot(&fit.beta_hat)
            - decomp.f_hat.dot(&fit.phi_hat)
            - pi.dot(&fit.xi_hat);
        let obj = resid.dot(&resid) / (2.0 * n)
            + fit.lambda_used * fit.beta_hat.iter().map(|b| b.abs()).sum::<f64>();
        assert!((obj - fit.objective_value).abs() <= 1e-8 * obj.abs().max(1.0));
        // φ̂ = n⁻¹ F̂ᵀ (y − Π ξ̂).
        let phi_closed = decomp.f_hat.t().dot(&(&y - &pi.dot(&fit.xi_hat))) / n;
        for (a, b) in fit.phi_hat.iter().zip(phi_closed.iter()) {
            assert!((a - b).abs() < 1e-8);
        }
        // F̂ᵀ r = 0 at the solution.
        let fr = decomp.f_hat.t().dot(&resid);
        assert!(fr.iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn kkt_certificate_holds_after_convergence() {
        let (decomp, pi, y) = seeded_problem(100, 40, 2, 9);
        let lmax = lambda_max(&decomp, pi.view(), y.view()).unwrap();
        let cfg = FitConfig::with_fixed_lambda(0.1 * lmax);
        let fit = fit_faplm(&decomp, pi.view(), y.view(), &cfg).unwrap();
        assert!(fit.converged);
        let smooth = stack_smooth(&decomp.f_hat, pi.view());
        let theta = ndarray::concatenate![ndarray::Axis(0), fit.phi_hat, fit.xi_hat];
        let viol = kkt_max_violation(
            decomp.u_hat.view(),
            smooth.view(),
            y.view(),
            fit.beta_hat.view(),
            theta.view(),
            fit.lambda_used,
        );
        assert!(viol <= 10.0 * cfg.tol, "kkt violation {viol}");
        assert!(fit.beta_hat.iter().any(|&b| b != 0.0));
    }

    #[test]
    fn scaling_response_and_penalty_scales_solution() {
        let (decomp, pi, y) = seeded_problem(70, 20, 2, 11);
        let lambda = 0.08;
        let cfg = FitConfig::with_fixed_lambda(lambda);
        let fit = fit_faplm(&decomp, pi.view(), y.view(), &cfg).unwrap();

        // Doubling (y, λ, tol) doubles every coefficient bit-for-bit.
        let y2 = &y * 2.0;
        let mut cfg2 = FitConfig::with_fixed_lambda(2.0 * lambda);
        cfg2.tol = 2.0 * cfg.tol;
        let fit2 = fit_faplm(&decomp, pi.view(), y2.view(), &cfg2).unwrap();
        for (a, b) in fit2.beta_hat.iter().zip(fit.beta_hat.iter()) {
            assert_eq!(*a, 2.0 * b);
        }
        for (a, b) in fit2.xi_hat.iter().zip(fit.xi_hat.iter()) {
            assert_eq!(*a, 2.0 * b);
        }
        for (a, b) in fit2.phi_hat.iter().zip(fit.phi_hat.iter()) {
            assert_eq!(*a, 2.0 * b);
        }

        // With an unscaled tolerance the match is within solver accuracy
        // and the active set is unchanged.
        let cfg3 = FitConfig::with_fixed_lambda(3.0 * lambda);
        let y3 = &y * 3.0;
        let fit3 = fit_faplm(&decomp, pi.view(), y3.view(), &cfg3).unwrap();
        for (a, b) in fit3.beta_hat.iter().zip(fit.beta_hat.iter()) {
            assert!((a - 3.0 * b).abs() < 1e-6);
            assert_eq!(*a != 0.0, *b != 0.0);
        }
    }

    #[test]
    fn cv_single_value_grid_returns_it() {
        let (decomp, pi, y) = seeded_problem(50, 10, 1, 13);
        let mut cfg = FitConfig::default();
        cfg.lambda_grid = Some(vec![0.123]);
        let cv = select_lambda_cv(&decomp, pi.view(), y.view(), &cfg).unwrap();
        assert_eq!(cv.lambda, 0.123);
        assert_eq!(cv.curve.len(), 1);
    }

    #[test]
    fn cv_rejects_too_few_samples() {
        let (decomp, pi, y) = seeded_problem(8, 4, 1, 15);
        let cfg = FitConfig::default(); // 5 folds, needs n >= 10
        assert!(matches!(
            select_lambda_cv(&decomp, pi.view(), y.view(), &cfg),
            Err(FaplmError::TooFewSamplesPerFold { .. })
        ));
    }

    #[test]
    fn anchor_matches_rate_formula() {
        let a = lambda_anchor(200, 200);
        assert!((a - 0.16276).abs() < 1e-4);
        let grid = default_lambda_grid(200, 200);
        assert_eq!(grid.len(), 7);
        assert!((grid[0] - a / 16.0).abs() < 1e-12);
        assert!((grid[6] - a * 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_covariate_prediction_is_smooth_only() {
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let n = 60;
        let p = 8;
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let z = Array1::from_shape_fn(n, |_| rng.gen::<f64>());
        let y = z.mapv(|v| (2.0 * std::f64::consts::PI * v).sin())
            + Array1::from_shape_fn(n, |_| 0.1 * rng.sample::<f64, _>(StandardNormal));
        let model = fit_model(
            Dataset { y, x, z },
            &PipelineConfig {
                k: KRule::Fixed(1),
                fit: FitConfig::with_fixed_lambda(0.05),
                ..Default::default()
            },
        )
        .unwrap();
        let x_new = Array2::zeros((3, p));
        let z_new = array![
            model.z_map.inverse(0.25),
            model.z_map.inverse(0.5),
            model.z_map.inverse(0.75)
        ];
        let out = predict(&model, x_new.view(), z_new.view()).unwrap();
        assert_eq!(out.n_clamped, 0);
        for (i, t) in [0.25, 0.5, 0.75].iter().enumerate() {
            let pi_row = match &model.smooth {
                SmoothDesign::Spline(b) => b.evaluate_point(*t).unwrap(),
                _ => unreachable!(),
            };
            let want = pi_row.dot(&model.fit.xi_hat);
            assert!((out.y_hat[i] - want).abs() < 1e-10);
        }
    }

    #[test]
    fn out_of_range_z_is_clamped_and_counted() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let n = 40;
        let x = Array2::from_shape_fn((n, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let z = Array1::from_shape_fn(n, |i| i as f64 / (n - 1) as f64);
        let y = Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal));
        let model = fit_model(
            Dataset { y, x, z },
            &PipelineConfig {
                k: KRule::Fixed(0),
                fit: FitConfig::with_fixed_lambda(1.0),
                ..Default::default()
            },
        )
        .unwrap();
        let out = predict(
            &model,
            Array2::zeros((2, 4)).view(),
            array![-0.5, 0.5].view(),
        )
        .unwrap();
        assert_eq!(out.n_clamped, 1);
        assert!(out.y_hat.iter().all(|v| v.is_finite()));
    }
}
