use serde::{Deserialize, Serialize};

use crate::error::GpError;
use crate::scalar::Scalar;

/// A point in the standardized dose space `[0, 1]^J`.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DoseCombination<T = f64>(pub Vec<T>);

impl<T: Scalar> DoseCombination<T> {
    pub fn new(coords: Vec<T>) -> Result<Self, GpError> {
        if let Some(c) = coords.iter().find(|c| !(**c >= T::zero() && **c <= T::one())) {
            return Err(GpError::InvalidArgument(format!("dose coordinate {c} outside [0, 1]")));
        }
        Ok(Self(coords))
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[T] {
        &self.0
    }

    /// Lexicographic comparison on coordinates; the tie-break order used by
    /// every grid search in the crate.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.partial_cmp(b) {
                Some(std::cmp::Ordering::Equal) | None => continue,
                Some(o) => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

impl<T: Scalar> std::fmt::Display for DoseCombination<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Binary covariate pattern identifying a stratum. Empty in the standard
/// (unstratified) setting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covariates(pub Vec<u8>);

impl Covariates {
    pub fn new(values: Vec<u8>) -> Result<Self, GpError> {
        if values.iter().any(|&v| v > 1) {
            return Err(GpError::InvalidArgument("covariate indicators must be 0 or 1".into()));
        }
        Ok(Self(values))
    }

    pub fn none() -> Self {
        Self(Vec::new())
    }

    /// Pattern for stratum index `k` among `2^p` strata; the first covariate
    /// is the most significant bit so strata enumerate lexicographically.
    pub fn from_stratum(k: usize, p: usize) -> Self {
        Self((0..p).map(|i| ((k >> (p - 1 - i)) & 1) as u8).collect())
    }

    pub fn stratum_index(&self) -> usize {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<T = f64> {
    pub dose: DoseCombination<T>,
    pub covariates: Covariates,
    /// Objective-scale response (efficacy already negated where larger is better).
    pub response: T,
}

impl<T: Scalar> Observation<T> {
    pub fn new(dose: DoseCombination<T>, covariates: Covariates, response: T) -> Result<Self, GpError> {
        if !response.is_finite() {
            return Err(GpError::InvalidArgument("response must be finite".into()));
        }
        Ok(Self {
            dose,
            covariates,
            response,
        })
    }
}

/// Kernel hyperparameters plus the profiled constant mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters<T = f64> {
    /// Process scale; observation noise variance is `nu * tau2`.
    pub nu: T,
    /// Nugget relative to `nu`.
    pub tau2: T,
    pub dose_lengthscales: Vec<T>,
    pub covariate_lengthscales: Vec<T>,
    /// GLS estimate of the constant mean; recomputed whenever a model is conditioned.
    pub beta0: T,
}

impl<T: Scalar> Hyperparameters<T> {
    pub fn new(nu: T, tau2: T, dose_lengthscales: Vec<T>, covariate_lengthscales: Vec<T>) -> Self {
        Self {
            nu,
            tau2,
            dose_lengthscales,
            covariate_lengthscales,
            beta0: T::zero(),
        }
    }

    pub fn dose_dims(&self) -> usize {
        self.dose_lengthscales.len()
    }

    pub fn covariate_dims(&self) -> usize {
        self.covariate_lengthscales.len()
    }

    pub fn noise_variance(&self) -> T {
        self.nu * self.tau2
    }

    pub fn validate(&self) -> Result<(), GpError> {
        let bad = |what: &str| Err(GpError::InvalidArgument(format!("{what} out of range")));
        if !(self.nu > T::zero() && self.nu.is_finite()) {
            return bad("nu");
        }
        if !(self.tau2 >= T::zero() && self.tau2.is_finite()) {
            return bad("tau2");
        }
        if self
            .dose_lengthscales
            .iter()
            .chain(&self.covariate_lengthscales)
            .any(|l| !(*l > T::zero() && l.is_finite()))
        {
            return bad("lengthscale");
        }
        Ok(())
    }

    pub(crate) fn check_point(&self, dose: &DoseCombination<T>, z: &Covariates) -> Result<(), GpError> {
        if dose.dims() != self.dose_dims() || z.len() != self.covariate_dims() {
            return Err(GpError::DimensionMismatch {
                expected: (self.dose_dims(), self.covariate_dims()),
                found: (dose.dims(), z.len()),
            });
        }
        Ok(())
    }

    /// Input coordinates divided by their lengthscales, so the kernel reduces
    /// to `exp(-|a - b|^2 / 2)`.
    pub(crate) fn scale_point(&self, dose: &DoseCombination<T>, z: &Covariates) -> Vec<T> {
        dose.0
            .iter()
            .zip(&self.dose_lengthscales)
            .map(|(&d, &l)| d / l)
            .chain(
                z.0.iter()
                    .zip(&self.covariate_lengthscales)
                    .map(|(&v, &l)| T::from_u8(v).unwrap() / l),
            )
            .collect()
    }
}
