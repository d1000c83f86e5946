use super::config::{DesignConfig, Mode};
use super::trial::{DoseRecommendation, Outcome, Trial};
use crate::error::DesignError;
use crate::Dose;

/// Source of patient responses for headless runs.
pub trait ResponseOracle {
    /// Response of one patient at `dose`. `stratum` is `None` when the design
    /// does not select patients by stratum, in which case the oracle decides
    /// who is enrolled.
    fn respond(&mut self, dose: &Dose, stratum: Option<usize>) -> f64;
}

impl<F: FnMut(&Dose, Option<usize>) -> f64> ResponseOracle for F {
    fn respond(&mut self, dose: &Dose, stratum: Option<usize>) -> f64 {
        self(dose, stratum)
    }
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub trial: Trial,
    pub recommendation: DoseRecommendation,
}

/// Feeds `oracle` responses into `trial` one full cohort at a time until it
/// stops. Outcomes are submitted in assignment order.
pub fn drive<O: ResponseOracle + ?Sized>(trial: &mut Trial, oracle: &mut O) -> Result<(), DesignError> {
    let selects_stratum = trial.config().mode == Mode::Personalized;
    while !trial.status().is_terminal() {
        let outcomes: Vec<Outcome> = trial
            .pending()
            .iter()
            .flat_map(|a| std::iter::repeat_n(a, a.remaining()))
            .map(|a| Outcome {
                stratum: a.stratum,
                dose: a.dose.clone(),
                response: oracle.respond(&a.dose, selects_stratum.then_some(a.stratum)),
            })
            .collect();
        trial.submit(&outcomes)?;
    }
    Ok(())
}

/// Runs a trial to completion and returns it with its final recommendation.
pub fn run_design<O: ResponseOracle + ?Sized>(config: DesignConfig, oracle: &mut O) -> Result<TrialRun, DesignError> {
    let mut trial = Trial::new(config)?;
    drive(&mut trial, oracle)?;
    let recommendation = trial.recommend()?;
    Ok(TrialRun { trial, recommendation })
}

pub fn run_standard<O: ResponseOracle + ?Sized>(config: DesignConfig, oracle: &mut O) -> Result<TrialRun, DesignError> {
    if config.mode != Mode::Standard {
        return Err(DesignError::InvalidConfig("mode: expected standard".into()));
    }
    run_design(config, oracle)
}

pub fn run_personalized<O: ResponseOracle + ?Sized>(
    config: DesignConfig,
    oracle: &mut O,
) -> Result<TrialRun, DesignError> {
    if config.mode != Mode::Personalized {
        return Err(DesignError::InvalidConfig("mode: expected personalized".into()));
    }
    run_design(config, oracle)
}
