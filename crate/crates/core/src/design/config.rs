use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionKind, NoiseScale};
use crate::error::DesignError;
use crate::gp::FitConfig;
use crate::sobol;

use super::grid::grid_steps;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One surrogate without covariates; patients are not selected by stratum.
    #[default]
    Standard,
    /// Covariates enter the surrogate and every stratum is optimized separately.
    Personalized,
}

/// Everything that determines a trial, including its random seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub mode: Mode,
    /// Number of agents `J`.
    pub dose_dims: usize,
    /// Number of binary covariates `P`; zero in standard mode.
    pub covariates: usize,
    /// Patients per suggested dose `r`.
    pub cohort_size: usize,
    /// Initial Sobol doses `c0` (per stratum when personalized).
    pub initial_doses: usize,
    /// Maximum total sample size `N`.
    pub max_n: usize,
    /// Stopping threshold on the grid maximum of the acquisition.
    pub delta: f64,
    pub grid_step: f64,
    /// Multiplier on the posterior sd in the effective-best rule.
    pub gamma: f64,
    /// Consecutive below-threshold iterations that stop a stratum; `J + 1` by default.
    pub consecutive_required: usize,
    /// Hand a stopped stratum's enrollment slots to the open strata.
    pub reallocate: bool,
    pub acquisition: AcquisitionKind,
    pub noise_scale: NoiseScale,
    /// Joint posterior draws used for the final recommendation.
    pub posterior_draws: usize,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Standard,
            dose_dims: 2,
            covariates: 0,
            cohort_size: 4,
            initial_doses: 5,
            max_n: 80,
            delta: 0.0,
            grid_step: 0.25,
            gamma: 1.0,
            consecutive_required: 3,
            reallocate: true,
            acquisition: AcquisitionKind::Aei,
            noise_scale: NoiseScale::ObservationSd,
            posterior_draws: 2000,
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

/// A configuration field and what is wrong with it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigProblem {
    pub field: String,
    pub message: String,
}

/// Named designs: `S1`/`P1` replicate more at fewer doses, `S2`/`P2` halve
/// the cohort and double the initial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    S1,
    S2,
    P1,
    P2,
}

impl std::str::FromStr for Preset {
    type Err = DesignError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "S1" => Ok(Self::S1),
            "S2" => Ok(Self::S2),
            "P1" => Ok(Self::P1),
            "P2" => Ok(Self::P2),
            _ => Err(DesignError::InvalidArgument(format!("unknown design preset `{s}`"))),
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl DesignConfig {
    pub fn standard() -> Self {
        Self::default()
    }

    /// Personalized design over `covariates` binary covariates. The cohort
    /// per dose is the standard four split across the strata (at least one),
    /// so both designs enroll the same number of patients per iteration.
    pub fn personalized(covariates: usize) -> Self {
        Self {
            mode: Mode::Personalized,
            covariates,
            cohort_size: (4usize >> covariates.min(2)).max(1),
            ..Self::default()
        }
    }

    /// Preset design; `covariates` is ignored for the standard presets.
    pub fn preset(preset: Preset, covariates: usize) -> Self {
        match preset {
            Preset::S1 => Self::standard(),
            Preset::S2 => Self {
                cohort_size: 2,
                initial_doses: 10,
                ..Self::standard()
            },
            Preset::P1 => Self::personalized(covariates),
            Preset::P2 => Self {
                cohort_size: 1,
                initial_doses: 10,
                ..Self::personalized(covariates)
            },
        }
    }

    /// Number of strata the design enrolls separately: `2^P` when
    /// personalized, otherwise one.
    pub fn strata(&self) -> usize {
        match self.mode {
            Mode::Standard => 1,
            Mode::Personalized => 1 << self.covariates.min(16),
        }
    }

    /// Sample size of the initial design.
    pub fn initial_n(&self) -> usize {
        self.cohort_size * self.initial_doses * self.strata()
    }

    /// Patients enrolled per acquisition iteration while no stratum has stopped.
    pub fn per_iteration(&self) -> usize {
        self.cohort_size * self.strata()
    }

    /// Acquisition iterations a trial runs when it never stops early.
    pub fn full_iterations(&self) -> usize {
        let per = self.per_iteration().max(1);
        self.max_n.saturating_sub(self.initial_n()).div_ceil(per)
    }

    pub fn problems(&self) -> Vec<ConfigProblem> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(ConfigProblem {
                field: field.into(),
                message,
            })
        };
        if !(1..=sobol::MAX_DIMS).contains(&self.dose_dims) {
            bad("dose_dims", format!("must be between 1 and {}", sobol::MAX_DIMS));
        }
        match self.mode {
            Mode::Standard if self.covariates != 0 => bad("covariates", "must be 0 for a standard design".into()),
            Mode::Personalized if !(1..=8).contains(&self.covariates) => {
                bad("covariates", "must be between 1 and 8 for a personalized design".into())
            }
            _ => {}
        }
        if self.cohort_size == 0 {
            bad("cohort_size", "must be at least 1".into());
        }
        if self.initial_doses < 2 {
            bad("initial_doses", "must be at least 2".into());
        }
        if self.max_n < self.initial_n() {
            bad(
                "max_n",
                format!("must be at least the initial sample size {}", self.initial_n()),
            );
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            bad("delta", "must be finite and non-negative".into());
        }
        if let Err(e) = grid_steps(self.grid_step) {
            bad("grid_step", e.to_string());
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            bad("gamma", "must be finite and non-negative".into());
        }
        if self.consecutive_required == 0 {
            bad("consecutive_required", "must be at least 1".into());
        }
        if self.posterior_draws == 0 {
            bad("posterior_draws", "must be at least 1".into());
        }
        if self.fit.starts == 0 {
            bad("fit.starts", "must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), DesignError> {
        let problems = self.problems();
        if problems.is_empty() {
            return Ok(());
        }
        Err(DesignError::InvalidConfig(
            problems
                .iter()
                .map(|p| format!("{}: {}", p.field, p.message))
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        assert!(DesignConfig::default().validate().is_ok());
        assert!(DesignConfig::personalized(1).validate().is_ok());
        assert_eq!(DesignConfig::default().consecutive_required, 3);
    }

    #[test]
    fn budget_accounting() {
        let s = DesignConfig::standard();
        let p = DesignConfig::personalized(1);
        assert_eq!((s.initial_n(), p.initial_n()), (20, 20));
        assert_eq!((s.per_iteration(), p.per_iteration()), (4, 4));
        assert_eq!((s.full_iterations(), p.full_iterations()), (15, 15));
        let p2 = DesignConfig::preset(Preset::P2, 1);
        assert_eq!((p2.initial_n(), p2.per_iteration(), p2.full_iterations()), (20, 2, 30));
    }

    #[test]
    fn reports_every_bad_field() {
        let c = DesignConfig {
            cohort_size: 0,
            initial_doses: 1,
            delta: -1.0,
            grid_step: 0.3,
            covariates: 1,
            ..Default::default()
        };
        let fields: Vec<String> = c.problems().into_iter().map(|p| p.field).collect();
        assert_eq!(
            fields,
            ["covariates", "cohort_size", "initial_doses", "delta", "grid_step"]
        );
        assert!(matches!(c.validate(), Err(DesignError::InvalidConfig(_))));
    }

    #[test]
    fn budget_must_cover_initial_design() {
        let c = DesignConfig {
            max_n: 19,
            ..DesignConfig::personalized(1)
        };
        assert_eq!(c.problems()[0].field, "max_n");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<DesignConfig>(r#"{"cohort": 3}"#).is_err());
        let c: DesignConfig =
            serde_json::from_str(r#"{"mode": "personalized", "covariates": 1, "cohort_size": 2}"#).unwrap();
        assert_eq!(c, DesignConfig::personalized(1));
    }

    #[test]
    fn presets() {
        assert_eq!("p2".parse::<Preset>().unwrap(), Preset::P2);
        assert!("x".parse::<Preset>().is_err());
        let s2 = DesignConfig::preset(Preset::S2, 1);
        assert_eq!(
            (s2.mode, s2.cohort_size, s2.initial_doses, s2.covariates),
            (Mode::Standard, 2, 10, 0)
        );
    }
}
