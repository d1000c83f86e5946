use rand::Rng;
use serde::{Deserialize, Serialize};

use super::model::{profiled_objective, GpModel, JitterPolicy};
use super::types::{Hyperparameters, Observation};
use crate::error::GpError;
use crate::optim::{self, LbfgsOptions};
use crate::scalar::Scalar;

/// Empirical-Bayes fitting options. Bounds apply to the natural (not log) scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub starts: usize,
    pub lengthscale_bounds: (f64, f64),
    pub nu_bounds: (f64, f64),
    pub tau2_bounds: (f64, f64),
    pub initial_lengthscale: f64,
    pub initial_tau2: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub jitter: JitterPolicy,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            starts: 10,
            lengthscale_bounds: (1e-2, 10.0),
            nu_bounds: (1e-6, 1e6),
            tau2_bounds: (1e-8, 10.0),
            initial_lengthscale: 0.5,
            initial_tau2: 0.1,
            max_iters: 500,
            tol: 1e-8,
            jitter: JitterPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Profiled log-likelihood at each start; `None` if it could not be evaluated.
    pub start_log_likelihoods: Vec<Option<f64>>,
    pub final_log_likelihoods: Vec<Option<f64>>,
    pub best_start: usize,
    pub log_likelihood: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
pub struct FitOutcome<T = f64> {
    pub model: GpModel<T>,
    pub report: FitReport,
}

impl FitConfig {
    fn log_bounds<T: Scalar>(&self, dims: usize) -> (Vec<T>, Vec<T>) {
        let mut lo = vec![T::lit(self.tau2_bounds.0.ln())];
        let mut hi = vec![T::lit(self.tau2_bounds.1.ln())];
        lo.extend(std::iter::repeat_n(T::lit(self.lengthscale_bounds.0.ln()), dims));
        hi.extend(std::iter::repeat_n(T::lit(self.lengthscale_bounds.1.ln()), dims));
        (lo, hi)
    }

    fn validate(&self) -> Result<(), GpError> {
        let ok = |(a, b): (f64, f64)| a > 0.0 && a < b && b.is_finite();
        if self.starts == 0 || !ok(self.lengthscale_bounds) || !ok(self.nu_bounds) || !ok(self.tau2_bounds) {
            return Err(GpError::InvalidArgument("invalid fit configuration".into()));
        }
        Ok(())
    }
}

fn unpack<T: Scalar>(x: &[T], dose_dims: usize) -> Hyperparameters<T> {
    let ls: Vec<T> = x[1..].iter().map(|v| v.exp()).collect();
    Hyperparameters::new(T::one(), x[0].exp(), ls[..dose_dims].to_vec(), ls[dose_dims..].to_vec())
}

/// Multi-start maximum-likelihood fit of the kernel hyperparameters.
///
/// `nu` is concentrated out analytically and `beta0` is always the GLS
/// estimate, so the optimizer searches over `ln tau2` and the log
/// lengthscales only. The first start is the configured default point; the
/// rest are log-uniform inside the bounds, drawn from `rng`.
pub fn fit<T: Scalar, R: Rng + ?Sized>(
    data: &[Observation<T>],
    config: &FitConfig,
    rng: &mut R,
) -> Result<FitOutcome<T>, GpError> {
    config.validate()?;
    if data.len() < 2 {
        return Err(GpError::InsufficientData {
            needed: 2,
            have: data.len(),
        });
    }
    let dose_dims = data[0].dose.dims();
    let cov_dims = data[0].covariates.len();
    let dims = dose_dims + cov_dims;
    let (lo, hi) = config.log_bounds::<T>(dims);

    let mut starts = Vec::with_capacity(config.starts);
    let mut first = vec![T::lit(config.initial_tau2.ln())];
    first.extend(std::iter::repeat_n(T::lit(config.initial_lengthscale.ln()), dims));
    starts.push(first);
    for _ in 1..config.starts {
        starts.push(
            lo.iter()
                .zip(&hi)
                .map(|(&a, &b)| T::lit(rng.gen_range(a.as_f64()..=b.as_f64())))
                .collect(),
        );
    }

    let objective = |x: &[T]| -> Option<(T, Vec<T>)> {
        let mut h = unpack(x, dose_dims);
        let (ll, g) = profiled_objective(data, &mut h, config.nu_bounds, &config.jitter).ok()?;
        Some((-ll, g.into_iter().map(|v| -v).collect()))
    };
    let opts = LbfgsOptions {
        max_iters: config.max_iters,
        f_tol: config.tol,
        ..Default::default()
    };

    let mut start_ll = Vec::with_capacity(starts.len());
    let mut final_ll = Vec::with_capacity(starts.len());
    let mut best: Option<(usize, optim::Minimum<T>)> = None;
    let mut iterations = 0;
    for (i, x0) in starts.iter().enumerate() {
        start_ll.push(objective(x0).map(|(v, _)| -v.as_f64()));
        let result = optim::minimize(objective, x0, &lo, &hi, &opts);
        final_ll.push(result.as_ref().map(|m| -m.value.as_f64()));
        if let Some(m) = result {
            iterations += m.iterations;
            if best.as_ref().is_none_or(|(_, b)| m.value < b.value) {
                best = Some((i, m));
            }
        }
    }
    let (best_start, best) = best.ok_or(GpError::AllStartsFailed { starts: config.starts })?;

    let mut hyper = unpack(&best.x, dose_dims);
    profiled_objective(data, &mut hyper, config.nu_bounds, &config.jitter)?;
    let model = GpModel::condition_with(data.to_vec(), hyper, &config.jitter)?;
    let report = FitReport {
        start_log_likelihoods: start_ll,
        final_log_likelihoods: final_ll,
        best_start,
        log_likelihood: model.log_likelihood().as_f64(),
        iterations,
    };
    Ok(FitOutcome { model, report })
}
