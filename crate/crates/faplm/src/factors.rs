//! Latent factor estimation from the spiked eigenstructure of `XXᵀ`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{FaplmError, Result};
use crate::linalg::sym_eigen_desc;

/// Estimated factor structure: `X = F̂ B̂ᵀ + Û` with `n⁻¹F̂ᵀF̂ = I_K` and
/// `F̂ᵀÛ = 0`.
#[derive(Debug, Clone)]
pub struct FactorDecomposition {
    pub f_hat: Array2<f64>,
    pub b_hat: Array2<f64>,
    pub u_hat: Array2<f64>,
    pub k: usize,
    pub spiked_eigenvalues: Array1<f64>,
}

impl FactorDecomposition {
    pub fn n(&self) -> usize {
        self.u_hat.nrows()
    }

    pub fn p(&self) -> usize {
        self.u_hat.ncols()
    }

    /// Degenerate decomposition with no factors: `Û = X`. Realizes the
    /// plain partially linear model through the same code path.
    pub fn without_factors(x: &Array2<f64>) -> Self {
        Self {
            f_hat: Array2::zeros((x.nrows(), 0)),
            b_hat: Array2::zeros((x.ncols(), 0)),
            u_hat: x.clone(),
            k: 0,
            spiked_eigenvalues: Array1::zeros(0),
        }
    }

    /// `(I − P̂)v` with `P̂ = n⁻¹F̂F̂ᵀ`, computed without materializing `P̂`.
    pub fn project_out_factors_vec(&self, v: ArrayView1<'_, f64>) -> Array1<f64> {
        if self.k == 0 {
            return v.to_owned();
        }
        let n = self.n() as f64;
        let coef = self.f_hat.t().dot(&v) / n;
        &v - &self.f_hat.dot(&coef)
    }

    /// `(I − P̂)A` column-wise.
    pub fn project_out_factors_mat(&self, a: ArrayView2<'_, f64>) -> Array2<f64> {
        if self.k == 0 {
            return a.to_owned();
        }
        let n = self.n() as f64;
        let coef = self.f_hat.t().dot(&a) / n;
        &a - &self.f_hat.dot(&coef)
    }
}

/// Least-squares factor estimation: columns of `F̂/√n` are the leading
/// eigenvectors of `XXᵀ`, `B̂ = n⁻¹XᵀF̂`, `Û = X − F̂B̂ᵀ`.
///
/// The eigenproblem is solved on the smaller of `XXᵀ` and `XᵀX`; the
/// results coincide in exact arithmetic. Each factor column is signed so
/// its entry of largest magnitude is positive.
pub fn estimate_factors(x: &Array2<f64>, k: usize) -> Result<FactorDecomposition> {
    let (n, p) = x.dim();
    let max_k = n.min(p);
    if k == 0 || k > max_k {
        return Err(FaplmError::FactorCountOutOfRange { k, max: max_k });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FaplmError::EigenFailure("non-finite design matrix"));
    }

    let (eigenvalues, mut factor_cols) = leading_left_eigvecs(x, k)?;

    // Sign convention: the entry of largest magnitude in each column is
    // positive (first such index on ties).
    for mut col in factor_cols.axis_iter_mut(Axis(1)) {
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }

    let f_hat = factor_cols * (n as f64).sqrt();
    let b_hat = x.t().dot(&f_hat) / n as f64;
    let u_hat = x - &f_hat.dot(&b_hat.t());
    Ok(FactorDecomposition {
        f_hat,
        b_hat,
        u_hat,
        k,
        spiked_eigenvalues: eigenvalues,
    })
}

/// Top-k orthonormal eigenvectors of `XXᵀ` with the matching eigenvalues.
fn leading_left_eigvecs(x: &Array2<f64>, k: usize) -> Result<(Array1<f64>, Array2<f64>)> {
    let (n, p) = x.dim();
    if n <= p {
        let s = x.dot(&x.t());
        let (vals, vecs) = sym_eigen_desc(s.view())?;
        let eigenvalues = vals.slice(ndarray::s![..k]).to_owned();
        let factor_cols = vecs.slice(ndarray::s![.., ..k]).to_owned();
        Ok((eigenvalues, factor_cols))
    } else {
        // Work on the p×p Gram and convert: if XᵀX w = λ w then
        // v = Xw/√λ is a unit eigenvector of XXᵀ.
        let g = x.t().dot(x);
        let (vals, vecs) = sym_eigen_desc(g.view())?;
        let tiny = vals[0].abs().max(1.0) * 1e-14;
        let mut factor_cols = Array2::zeros((n, k));
        for j in 0..k {
            if vals[j] <= tiny {
                // Effectively zero spiked eigenvalue: the conversion is
                // undefined, fall back to the n-side eigenproblem.
                let s = x.dot(&x.t());
                let (vals_n, vecs_n) = sym_eigen_desc(s.view())?;
                return Ok((
                    vals_n.slice(ndarray::s![..k]).to_owned(),
                    vecs_n.slice(ndarray::s![.., ..k]).to_owned(),
                ));
            }
            let w = vecs.column(j);
            let xv = x.dot(&w);
            let norm = xv.dot(&xv).sqrt();
            factor_cols.column_mut(j).assign(&(&xv / norm));
        }
        Ok((vals.slice(ndarray::s![..k]).to_owned(), factor_cols))
    }
}

/// Default upper bound for the factor-number search.
pub fn default_k_max(n: usize, p: usize) -> usize {
    (n.min(p) / 2).clamp(1, 15)
}

/// Result of the eigenvalue-ratio selection.
#[derive(Debug, Clone)]
pub struct FactorSelection {
    pub k_hat: usize,
    /// `λ_k / λ_{k+1}` for `k = 1..=k_max`.
    pub ratios: Vec<f64>,
    /// Set when the spectrum collapses before `k_max + 1`, in which case
    /// `k_hat` is the numerical rank instead of the ratio maximizer.
    pub low_rank: bool,
}

/// Estimates the number of factors by maximizing consecutive eigenvalue
/// ratios of `XXᵀ`; ties break toward the smallest k.
pub fn select_num_factors(x: &Array2<f64>, k_max: usize) -> Result<FactorSelection> {
    let (n, p) = x.dim();
    let limit = n.min(p).saturating_sub(1);
    if k_max == 0 || k_max > limit {
        return Err(FaplmError::FactorCountOutOfRange { k: k_max, max: limit });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FaplmError::EigenFailure("non-finite design matrix"));
    }
    let small = if n <= p { x.dot(&x.t()) } else { x.t().dot(x) };
    let (vals, _) = sym_eigen_desc(small.view())?;

    let floor = vals[0] * 1e-12;
    let ratios: Vec<f64> = (0..k_max).map(|i| vals[i] / vals[i + 1]).collect();
    if vals.iter().take(k_max + 1).any(|&v| v < floor) {
        let rank = vals.iter().take(k_max).filter(|&&v| v >= floor).count();
        return Ok(FactorSelection {
            k_hat: rank.max(1),
            ratios,
            low_rank: true,
        });
    }
    let mut k_hat = 1;
    for (i, &r) in ratios.iter().enumerate() {
        if r > ratios[k_hat - 1] {
            k_hat = i + 1;
        }
    }
    Ok(FactorSelection { k_hat, ratios, low_rank: false })
}
