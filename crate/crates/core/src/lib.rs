//! Bayesian optimization for standard and personalized multi-agent
//! dose-finding.
//!
//! The crate is organized bottom-up:
//!
//! * [`gp`]: constant-mean GP regression with an anisotropic
//!   squared-exponential kernel over doses and binary covariates,
//!   empirical-Bayes fitting, posterior prediction and joint sampling.
//! * [`acquisition`]: expected improvement, augmented expected improvement
//!   and the effective-best-point rule, all evaluated on a finite grid.
//! * [`design`]: the sequential trial state machine (initial Sobol design,
//!   cohort enrollment, stratum-specific stopping, budget reallocation,
//!   optimal-dose recommendation) and headless runners.
//! * [`scenarios`]: ground-truth surfaces used for simulation.
//! * [`harness`]: Monte-Carlo evaluation, metrics and stopping-threshold
//!   calibration.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the trial machinery uses.

// `!(x > 0)` deliberately sends NaN down the degenerate branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acquisition;
pub mod design;
mod error;
pub mod gp;
pub mod harness;
pub mod linalg;
pub mod optim;
pub mod scalar;
pub mod scenarios;
pub mod sobol;

pub use error::{DesignError, GpError, HarnessError, ScenarioError};
pub use scalar::Scalar;

pub type Dose = gp::DoseCombination<f64>;
pub type Obs = gp::Observation<f64>;
pub type Hyper = gp::Hyperparameters<f64>;
pub type Gp = gp::GpModel<f64>;
pub type Gp32 = gp::GpModel<f32>;
pub type AcquisitionCtx<'a> = acquisition::AcquisitionContext<'a, f64>;

/// Version string recorded in run provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
