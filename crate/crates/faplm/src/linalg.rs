//! Thin bridges between ndarray storage and nalgebra factorizations.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{FaplmError, Result};

pub fn to_dmatrix(a: ArrayView2<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
pub fn sym_eigen_desc(a: ArrayView2<'_, f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let m = a.nrows();
    if a.ncols() != m {
        return Err(FaplmError::DimensionMismatch {
            context: "symmetric eigen input must be square",
            expected: m,
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(FaplmError::EigenFailure("non-finite input"));
    }
    let se = to_dmatrix(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        se.eigenvalues[j]
            .partial_cmp(&se.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let values = Array1::from_iter(order.iter().map(|&i| se.eigenvalues[i]));
    let mut vectors = Array2::zeros((m, m));
    for (out_col, &in_col) in order.iter().enumerate() {
        for r in 0..m {
            vectors[[r, out_col]] = se.eigenvectors[(r, in_col)];
        }
    }
    Ok((values, vectors))
}

/// Cholesky factorization of a small SPD matrix, reused across solves.
pub struct SpdSolver {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    dim: usize,
}

impl SpdSolver {
    pub fn new(gram: ArrayView2<'_, f64>) -> Option<Self> {
        let dim = gram.nrows();
        to_dmatrix(gram).cholesky().map(|chol| Self { chol, dim })
    }

    pub fn solve(&self, rhs: ArrayView1<'_, f64>) -> Array1<f64> {
        debug_assert_eq!(rhs.len(), self.dim);
        let b = DVector::from_iterator(self.dim, rhs.iter().cloned());
        let x = self.chol.solve(&b);
        Array1::from_iter(x.iter().cloned())
    }
}

/// Largest absolute entry.
pub fn max_abs(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_vec(a: ArrayView1<'_, f64>) -> f64 {
    a.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_sorted_descending() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let (vals, vecs) = sym_eigen_desc(a.view()).unwrap();
        assert!((vals[0] - 3.0).abs() < 1e-12);
        assert!((vals[1] - 1.0).abs() < 1e-12);
        // A v = λ v for each column.
        for k in 0..2 {
            let v = vecs.column(k).to_owned();
            let av = a.dot(&v);
            for i in 0..2 {
                assert!((av[i] - vals[k] * v[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spd_solver_inverts() {
        let g = array![[4.0, 1.0], [1.0, 3.0]];
        let s = SpdSolver::new(g.view()).unwrap();
        let x = s.solve(array![1.0, 2.0].view());
        let r = g.dot(&x);
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }
}
