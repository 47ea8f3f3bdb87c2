//! Normalized B-spline system for the nonparametric component.
//!
//! The basis is clamped on `[0, 1]` (boundary knots carry full
//! multiplicity) and scaled so the functions sum to `√M` at every point,
//! where `M` is the basis dimension. With no internal knots the system
//! reduces to the scaled Bernstein basis.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{FaplmError, Result};
use crate::linalg::{sym_eigen_desc, SpdSolver};

/// Default polynomial order (cubic splines).
pub const DEFAULT_ORDER: usize = 4;

/// Default number of internal knots, `⌈n^{1/9}⌉`.
pub fn default_internal_knots(n_samples: usize) -> usize {
    (n_samples as f64).powf(1.0 / 9.0).ceil() as usize
}

/// Placement rule for internal knots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KnotPlacement {
    /// Equally spaced on (0, 1).
    #[default]
    Uniform,
    /// At empirical quantiles of the observed (rescaled) covariate.
    ZQuantiles,
}

/// B-spline basis of order `h + 1` with `k_n` internal knots on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineBasis {
    order: usize,
    n_internal_knots: usize,
    knot_vector: Vec<f64>,
    basis_dim: usize,
}

impl SplineBasis {
    /// Builds the basis with equally spaced internal knots. `order` and
    /// `k_n` default to 4 and `⌈n^{1/9}⌉` when not given.
    pub fn build(n_samples: usize, order: Option<usize>, k_n: Option<usize>) -> Result<Self> {
        let order = order.unwrap_or(DEFAULT_ORDER);
        let k_n = k_n.unwrap_or_else(|| default_internal_knots(n_samples));
        let internal: Vec<f64> = (1..=k_n)
            .map(|i| i as f64 / (k_n + 1) as f64)
            .collect();
        Self::with_internal_knots(order, &internal)
    }

    /// Builds the basis from explicit internal knots in (0, 1).
    pub fn with_internal_knots(order: usize, internal: &[f64]) -> Result<Self> {
        if order < 2 {
            return Err(FaplmError::InvalidSplineOrder(order));
        }
        if internal
            .windows(2)
            .any(|w| w[0] > w[1])
            || internal.iter().any(|&t| !(0.0 < t && t < 1.0))
        {
            return Err(FaplmError::InvalidConfig(
                "internal knots must be nondecreasing and inside (0, 1)".into(),
            ));
        }
        let mut knot_vector = vec![0.0; order];
        knot_vector.extend_from_slice(internal);
        knot_vector.extend(std::iter::repeat(1.0).take(order));
        Ok(Self {
            order,
            n_internal_knots: internal.len(),
            knot_vector,
            basis_dim: internal.len() + order,
        })
    }

    /// Internal knots at empirical quantiles of `z` (expects `z ⊂ [0,1]`).
    pub fn with_z_quantile_knots(order: usize, k_n: usize, z: ArrayView1<'_, f64>) -> Result<Self> {
        let mut sorted: Vec<f64> = z.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite z"));
        let internal: Vec<f64> = (1..=k_n)
            .map(|i| {
                let q = i as f64 / (k_n + 1) as f64;
                let pos = q * (sorted.len() - 1) as f64;
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                let v = if lo + 1 < sorted.len() {
                    sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
                } else {
                    sorted[lo]
                };
                v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
            })
            .collect();
        Self::with_internal_knots(order, &internal)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn n_internal_knots(&self) -> usize {
        self.n_internal_knots
    }

    pub fn knot_vector(&self) -> &[f64] {
        &self.knot_vector
    }

    /// Basis dimension `M = k_n + order`.
    pub fn basis_dim(&self) -> usize {
        self.basis_dim
    }

    /// Scale applied to the partition-of-unity values, `√M`.
    pub fn normalization(&self) -> f64 {
        (self.basis_dim as f64).sqrt()
    }

    /// Index of the knot span containing `z`; the final span is
    /// right-closed so `z = 1` evaluates on `[t_{M-1}, 1]`.
    fn span(&self, z: f64) -> usize {
        let m = self.basis_dim;
        if z >= 1.0 {
            return m - 1;
        }
        // Largest index with knot[idx] <= z, clamped to valid spans.
        let mut idx = self.knot_vector.partition_point(|&t| t <= z) - 1;
        idx = idx.clamp(self.order - 1, m - 1);
        idx
    }

    /// Values of the `order` basis functions alive at `z`, already scaled
    /// by `√M`; returns the offset of the first nonzero column.
    fn nonzero_values(&self, z: f64) -> (usize, Vec<f64>) {
        let k = self.order;
        let t = &self.knot_vector;
        let mu = self.span(z);
        let mut vals = vec![0.0; k];
        let mut left = vec![0.0; k];
        let mut right = vec![0.0; k];
        vals[0] = 1.0;
        for deg in 1..k {
            left[deg] = z - t[mu + 1 - deg];
            right[deg] = t[mu + deg] - z;
            let mut saved = 0.0;
            for r in 0..deg {
                let denom = right[r + 1] + left[deg - r];
                let tmp = vals[r] / denom;
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[deg - r] * tmp;
            }
            vals[deg] = saved;
        }
        let scale = self.normalization();
        for v in &mut vals {
            *v *= scale;
        }
        (mu + 1 - k, vals)
    }

    /// Evaluates the scaled basis at every entry of `z` (all in `[0, 1]`).
    pub fn evaluate(&self, z: ArrayView1<'_, f64>) -> Result<BasisMatrix> {
        for (i, &v) in z.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(FaplmError::ZOutOfRange { index: i, value: v });
            }
        }
        let mut values = Array2::zeros((z.len(), self.basis_dim));
        for (i, &zi) in z.iter().enumerate() {
            let (offset, vals) = self.nonzero_values(zi);
            for (j, v) in vals.into_iter().enumerate() {
                values[[i, offset + j]] = v;
            }
        }
        Ok(BasisMatrix { values, basis: self.clone() })
    }

    /// Scaled basis values at a single point, as a dense row.
    pub fn evaluate_point(&self, z: f64) -> Result<Array1<f64>> {
        let m = self.evaluate(ndarray::aview1(&[z]))?;
        Ok(m.values.row(0).to_owned())
    }
}

/// Basis evaluated at the sample points: row i holds the scaled values
/// at `z_i`. At most `order` entries per row are nonzero.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub values: Array2<f64>,
    pub basis: SplineBasis,
}

impl BasisMatrix {
    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn basis_dim(&self) -> usize {
        self.basis.basis_dim()
    }
}

/// Orthogonal projector onto the basis column space, kept in factored
/// form `Π (ΠᵀΠ)⁻¹ Πᵀ`.
pub struct BasisProjector {
    pi: Array2<f64>,
    solver: SpdSolver,
}

/// Factors the projector, rejecting Gram matrices whose smallest
/// eigenvalue falls below `1e-10` times the largest (too many knots for
/// the sample).
pub fn projector_onto_basis(pi: &BasisMatrix) -> Result<BasisProjector> {
    BasisProjector::new(pi.values.clone())
}

impl BasisProjector {
    /// Builds the projector for an arbitrary full-column-rank design.
    pub fn new(pi: Array2<f64>) -> Result<Self> {
        let gram = pi.t().dot(&pi);
        let (eigs, _) = sym_eigen_desc(gram.view())?;
        let largest = eigs[0].max(0.0);
        let smallest = eigs[eigs.len() - 1];
        let ratio = if largest > 0.0 { smallest / largest } else { 0.0 };
        if !(ratio > 1e-10) {
            return Err(FaplmError::RankDeficientBasis { ratio });
        }
        let solver = SpdSolver::new(gram.view()).ok_or(FaplmError::RankDeficientBasis { ratio })?;
        Ok(Self { pi, solver })
    }

    pub fn design(&self) -> ArrayView2<'_, f64> {
        self.pi.view()
    }

    /// Least-squares coefficients of `y` on the basis columns.
    pub fn coefficients(&self, y: ArrayView1<'_, f64>) -> Array1<f64> {
        self.solver.solve(self.pi.t().dot(&y).view())
    }

    /// `H v = Π (ΠᵀΠ)⁻¹ Πᵀ v`.
    pub fn project_vec(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        self.pi.dot(&self.coefficients(v))
    }

    /// `(I − H) v`.
    pub fn residualize_vec(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        &v - &self.project_vec(v)
    }

    /// `(I − H) A`, column by column.
    pub fn residualize_mat(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        let coef = self.solver_solve_mat(self.pi.t().dot(&a));
        &a - &self.pi.dot(&coef)
    }

    fn solver_solve_mat(&self, rhs: Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(rhs.dim());
        for (j, col) in rhs.axis_iter(Axis(1)).enumerate() {
            out.column_mut(j).assign(&self.solver.solve(col));
        }
        out
    }

    /// Dense `n×n` projector matrix; intended for small-sample checks.
    pub fn materialize(&self) -> Array2<f64> {
        let n = self.pi.nrows();
        let eye = Array2::eye(n);
        let mut h = Array2::zeros((n, n));
        for (j, col) in eye.axis_iter(Axis(1)).enumerate() {
            h.column_mut(j).assign(&self.project_vec(col));
        }
        h
    }
}
