//! Fused quantile treatment effect (FQTE) estimation.
//!
//! A small validation sample observes the full confounder set `(X, S)`; a
//! larger auxiliary sample observes only `X`. The initial doubly robust QTE
//! estimate from the validation sample is projected onto a calibration vector
//! built from confounded estimating functions evaluated at pooled-sample
//! estimates. The projection keeps the estimator consistent and never
//! increases its asymptotic variance.
//!
//! Module map:
//! - [`data`]: two-sample dataset model and CSV ingestion.
//! - [`models`]: logistic propensity and normal-linear outcome working models.
//! - [`drq`]: doubly robust quantile estimating functions, solver, density and
//!   influence functions.
//! - [`calib`]: calibration vector over one or several quantile levels.
//! - [`fuse`]: covariance estimation, projection, confidence intervals and
//!   sensitivity analysis.
//! - [`estimate`]: end-to-end pipeline tying the above together.
//! - [`sim`]: simulation design, scenarios and the Monte Carlo harness.

pub mod calib;
pub mod data;
pub mod drq;
pub mod error;
pub mod estimate;
pub mod fuse;
pub mod models;
pub mod numeric;
pub mod sim;

pub use error::{FqteError, Result};
pub use nalgebra;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
