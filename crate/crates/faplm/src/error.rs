use thiserror::Error;

/// Errors produced anywhere in the estimation and testing pipeline.
#[derive(Error, Debug)]
pub enum FaplmError {
    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite entry in {name} at row {row}, column {col}")]
    NonFinite {
        name: &'static str,
        row: usize,
        col: usize,
    },

    #[error("need at least 2 observations, got {0}")]
    TooFewObservations(usize),

    #[error("z is constant (zero range); the nonparametric component is unidentifiable")]
    ConstantZ,

    #[error("spline order must be at least 2, got {0}")]
    InvalidSplineOrder(usize),

    #[error("z value {value} at index {index} lies outside [0, 1]")]
    ZOutOfRange { index: usize, value: f64 },

    #[error("basis Gram matrix is rank deficient (eigenvalue ratio {ratio:.3e}); too many knots for the sample")]
    RankDeficientBasis { ratio: f64 },

    #[error("rank-deficient unpenalized block in the regression design")]
    RankDeficientSmoothBlock,

    #[error("number of factors {k} out of range [1, {max}]")]
    FactorCountOutOfRange { k: usize, max: usize },

    #[error("eigendecomposition failed: {0}")]
    EigenFailure(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cross-validation needs n >= 2 * folds (n = {n}, folds = {folds})")]
    TooFewSamplesPerFold { n: usize, folds: usize },

    #[error("gram matrix is not symmetric (max asymmetry {0:.3e})")]
    AsymmetricGram(f64),

    #[error("precision row {row} infeasible at the maximum allowed delta {delta_max:.3e}; the surrogate Gram is pathological")]
    InfeasiblePrecision { row: usize, delta_max: f64 },

    #[error("linear program failed to terminate after {0} pivots")]
    LpStalled(usize),

    #[error("noise variance estimate is zero (interpolating fit); the test statistic is undefined")]
    DegenerateNoiseVariance,
}

impl FaplmError {
    /// Pipeline stage the error originates from, for diagnostics.
    pub fn stage(&self) -> &'static str {
        use FaplmError::*;
        match self {
            DimensionMismatch { .. } | NonFinite { .. } | TooFewObservations(_) | ConstantZ => {
                "validation"
            }
            InvalidSplineOrder(_)
            | ZOutOfRange { .. }
            | RankDeficientBasis { .. } => "splines",
            FactorCountOutOfRange { .. } | EigenFailure(_) => "factors",
            RankDeficientSmoothBlock | TooFewSamplesPerFold { .. } => "regression",
            AsymmetricGram(_) | InfeasiblePrecision { .. } | LpStalled(_) => "precision",
            DegenerateNoiseVariance => "inference",
            InvalidConfig(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, FaplmError>;
