//! Observed data and simulation ground truth.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{FaplmError, Result};

/// Observed sample: response `y` (length n), high-dimensional covariates
/// `x` (n×p) and the scalar covariate `z` (length n) entering the
/// nonparametric component.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: Array1<f64>,
    pub x: Array2<f64>,
    pub z: Array1<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Checks dimensions and finiteness; returns the dataset unchanged when
/// all invariants hold. Idempotent.
pub fn validate_dataset(d: Dataset) -> Result<Dataset> {
    let n = d.y.len();
    if n < 2 {
        return Err(FaplmError::TooFewObservations(n));
    }
    if d.x.nrows() != n {
        return Err(FaplmError::DimensionMismatch {
            context: "x rows vs y length",
            expected: n,
            got: d.x.nrows(),
        });
    }
    if d.z.len() != n {
        return Err(FaplmError::DimensionMismatch {
            context: "z length vs y length",
            expected: n,
            got: d.z.len(),
        });
    }
    if d.x.ncols() == 0 {
        return Err(FaplmError::DimensionMismatch {
            context: "x must have at least one column",
            expected: 1,
            got: 0,
        });
    }
    for (i, v) in d.y.iter().enumerate() {
        if !v.is_finite() {
            return Err(FaplmError::NonFinite { name: "y", row: i, col: 0 });
        }
    }
    for ((i, j), v) in d.x.indexed_iter() {
        if !v.is_finite() {
            return Err(FaplmError::NonFinite { name: "x", row: i, col: j });
        }
    }
    for (i, v) in d.z.iter().enumerate() {
        if !v.is_finite() {
            return Err(FaplmError::NonFinite { name: "z", row: i, col: 0 });
        }
    }
    Ok(d)
}

/// Affine map `z ↦ (z − min) / range` taking the observed covariate onto
/// `[0, 1]`, kept so fitted curves can be reported on the original scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub min: f64,
    pub range: f64,
}

impl AffineMap {
    /// Identity map for data already on `[0, 1]`.
    pub fn identity() -> Self {
        Self { min: 0.0, range: 1.0 }
    }

    pub fn forward(&self, z: f64) -> f64 {
        (z - self.min) / self.range
    }

    pub fn inverse(&self, t: f64) -> f64 {
        self.min + t * self.range
    }
}

/// Min-max rescales `z` onto `[0, 1]`, returning the transformed vector
/// and the affine map for the inverse transformation.
///
/// Errors when `z` is constant: a flat covariate carries no information
/// about the nonparametric component.
pub fn rescale_z_to_unit(z: &Array1<f64>) -> Result<(Array1<f64>, AffineMap)> {
    let min = z.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if !(range > 0.0) {
        return Err(FaplmError::ConstantZ);
    }
    let mapped = z.mapv(|v| (v - min) / range);
    Ok((mapped, AffineMap { min, range }))
}

/// Everything the simulator knows that an estimator does not. Only used
/// by the simulation harness and its tests.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub beta0: Array1<f64>,
    pub g0_values: Array1<f64>,
    pub varepsilon: Array1<f64>,
    pub f: Array2<f64>,
    pub u: Array2<f64>,
    pub loading_b: Array2<f64>,
    pub sigma_eps2: f64,
}

impl GroundTruth {
    /// Rebuilds the response from the stored pieces:
    /// `u·β₀ + f·(Bᵀβ₀) + g₀ + ε`.
    pub fn reconstruct_response(&self) -> Array1<f64> {
        let phi0 = self.loading_b.t().dot(&self.beta0);
        self.u.dot(&self.beta0) + self.f.dot(&phi0) + &self.g0_values + &self.varepsilon
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> Dataset {
        Dataset {
            y: array![1.0, 2.0, 3.0],
            x: array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
            z: array![0.1, 0.5, 0.9],
        }
    }

    #[test]
    fn accepts_consistent_dataset() {
        assert!(validate_dataset(toy()).is_ok());
    }

    #[test]
    fn validation_is_idempotent() {
        let once = validate_dataset(toy()).unwrap();
        let twice = validate_dataset(once.clone()).unwrap();
        assert_eq!(once.y, twice.y);
        assert_eq!(once.x, twice.x);
        assert_eq!(once.z, twice.z);
    }

    #[test]
    fn rejects_row_mismatch() {
        let mut d = toy();
        d.x = Array2::zeros((4, 2));
        match validate_dataset(d) {
            Err(FaplmError::DimensionMismatch { expected: 3, got: 4, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn reports_nan_location() {
        let mut d = toy();
        d.y[1] = f64::NAN;
        match validate_dataset(d) {
            Err(FaplmError::NonFinite { name: "y", row: 1, .. }) => {}
            other => panic!("unexpected: {other:?}"),
        }
        let mut d = toy();
        d.x[[2, 1]] = f64::INFINITY;
        match validate_dataset(d) {
            Err(FaplmError::NonFinite { name: "x", row: 2, col: 1 }) => {}
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn rejects_tiny_sample() {
        let d = Dataset {
            y: array![1.0],
            x: array![[1.0]],
            z: array![0.0],
        };
        assert!(matches!(validate_dataset(d), Err(FaplmError::TooFewObservations(1))));
    }

    #[test]
    fn rescale_matches_affine_examples() {
        let (m, map) = rescale_z_to_unit(&array![0.0, 5.0, 10.0]).unwrap();
        assert_eq!(m, array![0.0, 0.5, 1.0]);
        assert_eq!(map, AffineMap { min: 0.0, range: 10.0 });

        let (m, _) = rescale_z_to_unit(&array![-1.0, 0.0, 3.0]).unwrap();
        assert_eq!(m, array![0.0, 0.25, 1.0]);
    }

    #[test]
    fn rescale_rejects_constant_z() {
        assert!(matches!(
            rescale_z_to_unit(&array![0.2, 0.2, 0.2]),
            Err(FaplmError::ConstantZ)
        ));
    }

    #[test]
    fn rescale_roundtrip() {
        let z = array![-3.5, 0.0, 1.25, 7.75, 2.0];
        let (m, map) = rescale_z_to_unit(&z).unwrap();
        for (orig, t) in z.iter().zip(m.iter()) {
            let back = map.inverse(*t);
            assert!((back - orig).abs() <= 1e-12 * orig.abs().max(1.0));
        }
    }
}
