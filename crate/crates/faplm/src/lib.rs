//! Factor-adjusted sparse partially linear regression (FAPLM).
//!
//! The model couples a high-dimensional linear component with a latent
//! factor structure and a univariate nonparametric component:
//! the observed covariates decompose as `X = F Bᵀ + U`, and the response
//! satisfies `Y = Uᵀβ + Fᵀφ + g(Z) + ε` with `φ = Bᵀβ` and `g` smooth
//! on `[0, 1]`.
//!
//! The crate provides
//! - latent factor estimation from the spiked eigenstructure of `XXᵀ`,
//!   including a ratio estimator for the number of factors ([`factors`]),
//! - a normalized B-spline system for the nonparametric component
//!   ([`splines`]),
//! - penalized estimation of the linear coefficients with an exact
//!   least-squares update of the unpenalized block ([`regression`]),
//! - a constrained ℓ1 precision estimate of the surrogate Gram matrix
//!   ([`precision`]) backed by a dense simplex solver ([`lp`]),
//! - the projection-debiased estimator, max-type statistic and Gaussian
//!   multiplier bootstrap for testing the global null `β = 0`
//!   ([`inference`]),
//! - reproducible Monte Carlo studies with PLM/FALM baselines
//!   ([`simulation`]).

pub mod data;
pub mod error;
pub mod factors;
pub mod inference;
pub mod lp;
pub mod precision;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod splines;

mod linalg;

pub use data::{rescale_z_to_unit, validate_dataset, AffineMap, Dataset, GroundTruth};
pub use error::FaplmError;
pub use rng::{RngSpec, StreamKind};
