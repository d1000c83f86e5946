//! Constant-mean Gaussian-process regression with a separable anisotropic
//! squared-exponential kernel over dose coordinates and binary covariates.
//!
//! Observations follow `y ~ N(beta0 1, nu K)` with
//! `K = kernel(X, X) + tau2 I`, so the observation noise variance is
//! `nu * tau2`. The constant mean is always profiled out with its GLS
//! estimate and the posterior variance carries the extra term for the
//! estimated mean.

mod fit;
mod model;
mod types;

pub use fit::{fit, FitConfig, FitOutcome, FitReport};
pub use model::{
    build_covariance, kernel, marginal_log_likelihood, marginal_log_likelihood_with, mll_gradient, GpModel,
    JitterPolicy, JointPosterior, Prediction,
};
pub use types::{Covariates, DoseCombination, Hyperparameters, Observation};
