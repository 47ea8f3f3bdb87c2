//! Nonparametric surrogates and the constrained ℓ1 precision estimate.
//!
//! The surrogates strip the conditional-mean-on-z component out of the
//! idiosyncratic matrix, `Ũ = Û − Π(ΠᵀΠ)⁻¹ΠᵀÛ`; their Gram matrix
//! `Σ̃ = n⁻¹ŨᵀŨ` is then approximately inverted row by row:
//!
//! ```text
//! row j:  min ‖γ‖₁  s.t.  ‖Σ̃γ − e_j‖∞ ≤ δ_n,
//! ```
//!
//! after which symmetry is enforced by keeping, for each (i, j), the
//! entry of smaller magnitude among the two candidates.

use ndarray::{Array1, Array2};
use rayon::prelude::*;

use crate::error::{FaplmError, Result};
use crate::factors::FactorDecomposition;
use crate::linalg::max_abs;
use crate::lp::{min_l1_under_max_residual, L1MinOutcome};
use crate::splines::{projector_onto_basis, BasisMatrix};

/// Residualized idiosyncratic components and their Gram matrix.
#[derive(Debug, Clone)]
pub struct Surrogates {
    /// `Ũ = (I − H)Û`, n×p.
    pub u_tilde: Array2<f64>,
    /// `Σ̃ = n⁻¹ŨᵀŨ`, symmetrized exactly.
    pub sigma_tilde: Array2<f64>,
}

/// Projects the basis out of `Û` and forms the surrogate Gram.
pub fn compute_surrogates(decomp: &FactorDecomposition, pi: &BasisMatrix) -> Result<Surrogates> {
    if pi.n_rows() != decomp.n() {
        return Err(FaplmError::DimensionMismatch {
            context: "basis rows vs decomposition rows",
            expected: decomp.n(),
            got: pi.n_rows(),
        });
    }
    let proj = projector_onto_basis(pi)?;
    let u_tilde = proj.residualize_mat(decomp.u_hat.view());
    let sigma_tilde = gram_symmetrized(&u_tilde);
    Ok(Surrogates { u_tilde, sigma_tilde })
}

/// Surrogates for an arbitrary smooth design matrix (same residualization
/// with `Π` replaced by the given columns).
pub fn compute_surrogates_for_design(
    decomp: &FactorDecomposition,
    design: Array2<f64>,
) -> Result<Surrogates> {
    let proj = crate::splines::BasisProjector::new(design)?;
    let u_tilde = proj.residualize_mat(decomp.u_hat.view());
    let sigma_tilde = gram_symmetrized(&u_tilde);
    Ok(Surrogates { u_tilde, sigma_tilde })
}

fn gram_symmetrized(u_tilde: &Array2<f64>) -> Array2<f64> {
    let n = u_tilde.nrows() as f64;
    let mut g = u_tilde.t().dot(u_tilde) / n;
    // Kill the last-bit asymmetry from the matrix product.
    for i in 0..g.nrows() {
        for j in (i + 1)..g.ncols() {
            let avg = 0.5 * (g[[i, j]] + g[[j, i]]);
            g[[i, j]] = avg;
            g[[j, i]] = avg;
        }
    }
    g
}

/// Tuning rule for the feasibility radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaRule {
    Fixed(f64),
    /// `δ₀ = 0.5·(log p/√n + √(M_n log p/n))`, doubled until every row
    /// is feasible.
    Auto { n: usize, basis_dim: usize },
}

/// Starting radius of the auto rule.
pub fn auto_delta(n: usize, p: usize, basis_dim: usize) -> f64 {
    let logp = (p as f64).ln();
    let nf = n as f64;
    0.5 * (logp / nf.sqrt() + (basis_dim as f64 * logp / nf).sqrt())
}

/// Row-wise constrained ℓ1 estimate of the inverse Gram.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    /// Symmetrized matrix, used downstream.
    pub theta_hat: Array2<f64>,
    /// Row solutions before symmetrization; the feasibility certificate
    /// is stated for these.
    pub theta_presym: Array2<f64>,
    /// True where the symmetrized entry was taken from the transposed
    /// position.
    pub from_transpose: Array2<bool>,
    pub delta_n: f64,
    /// Largest per-row constraint slack `δ − ‖Σ̃γ_j − e_j‖∞`.
    pub feasibility_margin: f64,
    pub per_row_l1: Array1<f64>,
    /// Number of times the auto rule doubled the radius.
    pub doubling_count: usize,
}

/// Solves the row programs at the given (or auto-tuned) radius.
pub fn estimate_precision(sigma_tilde: &Array2<f64>, rule: DeltaRule) -> Result<PrecisionEstimate> {
    let p = sigma_tilde.nrows();
    if sigma_tilde.ncols() != p {
        return Err(FaplmError::DimensionMismatch {
            context: "gram matrix must be square",
            expected: p,
            got: sigma_tilde.ncols(),
        });
    }
    let scale = max_abs(sigma_tilde.view());
    let mut asym = 0.0_f64;
    for i in 0..p {
        for j in (i + 1)..p {
            asym = asym.max((sigma_tilde[[i, j]] - sigma_tilde[[j, i]]).abs());
        }
    }
    if asym > 1e-10 * scale.max(1.0) {
        return Err(FaplmError::AsymmetricGram(asym));
    }

    let delta_max = 2.0 * scale;
    let (mut delta, auto) = match rule {
        DeltaRule::Fixed(d) => {
            if !(d >= 0.0) {
                return Err(FaplmError::InvalidConfig("delta must be nonnegative".into()));
            }
            (d, false)
        }
        DeltaRule::Auto { n, basis_dim } => (auto_delta(n, p, basis_dim), true),
    };

    let mut doubling_count = 0usize;
    loop {
        match solve_all_rows(sigma_tilde, delta)? {
            RowsOutcome::Feasible(rows) => {
                return Ok(assemble(sigma_tilde, rows, delta, doubling_count));
            }
            RowsOutcome::InfeasibleRow(row) => {
                if !auto || delta >= delta_max {
                    return Err(FaplmError::InfeasiblePrecision { row, delta_max });
                }
                delta = (2.0 * delta).min(delta_max);
                doubling_count += 1;
            }
        }
    }
}

enum RowsOutcome {
    Feasible(Vec<crate::lp::L1MinSolution>),
    InfeasibleRow(usize),
}

fn solve_all_rows(sigma: &Array2<f64>, delta: f64) -> Result<RowsOutcome> {
    let p = sigma.nrows();
    let solved: Vec<Result<L1MinOutcome>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut target = Array1::zeros(p);
            target[j] = 1.0;
            min_l1_under_max_residual(sigma.view(), target.view(), delta)
        })
        .collect();
    let mut rows = Vec::with_capacity(p);
    for (j, outcome) in solved.into_iter().enumerate() {
        match outcome? {
            L1MinOutcome::Optimal(sol) => {
                if sol.max_residual > delta + 1e-8 {
                    return Ok(RowsOutcome::InfeasibleRow(j));
                }
                rows.push(sol);
            }
            L1MinOutcome::Infeasible => return Ok(RowsOutcome::InfeasibleRow(j)),
        }
    }
    Ok(RowsOutcome::Feasible(rows))
}

fn assemble(
    sigma: &Array2<f64>,
    rows: Vec<crate::lp::L1MinSolution>,
    delta: f64,
    doubling_count: usize,
) -> PrecisionEstimate {
    let p = sigma.nrows();
    let mut theta_presym = Array2::zeros((p, p));
    let mut per_row_l1 = Array1::zeros(p);
    let mut feasibility_margin = f64::NEG_INFINITY;
    for (j, sol) in rows.into_iter().enumerate() {
        theta_presym.row_mut(j).assign(&sol.gamma);
        per_row_l1[j] = sol.l1;
        feasibility_margin = feasibility_margin.max(delta - sol.max_residual);
    }
    let (theta_hat, from_transpose) = symmetrize(&theta_presym);
    PrecisionEstimate {
        theta_hat,
        theta_presym,
        from_transpose,
        delta_n: delta,
        feasibility_margin,
        per_row_l1,
        doubling_count,
    }
}

/// Smaller-magnitude symmetrization: keeps `Γ_ij` when
/// `|Γ_ij| ≤ |Γ_ji|`, otherwise `Γ_ji`.
pub fn symmetrize(theta: &Array2<f64>) -> (Array2<f64>, Array2<bool>) {
    let p = theta.nrows();
    let mut out = theta.clone();
    let mut from_transpose = Array2::from_elem((p, p), false);
    for i in 0..p {
        for j in 0..p {
            if theta[[i, j]].abs() > theta[[j, i]].abs() {
                out[[i, j]] = theta[[j, i]];
                from_transpose[[i, j]] = true;
            }
        }
    }
    (out, from_transpose)
}

/// `‖ΘΣ̃ − I‖max` — the feasibility certificate for a candidate Θ.
pub fn max_constraint_violation(theta: &Array2<f64>, sigma: &Array2<f64>) -> f64 {
    let mut prod = theta.dot(sigma);
    for i in 0..prod.nrows() {
        prod[[i, i]] -= 1.0;
    }
    max_abs(prod.view())
}
