//! Sequential dose-finding: the standard and personalized designs.
//!
//! A [`Trial`] owns the design state and advances only when outcomes are
//! submitted, so the same code drives simulated trials (through
//! [`run_design`] and a [`ResponseOracle`]) and live trials fed one cohort at
//! a time.

mod config;
mod grid;
mod runner;
mod stopping;
mod trial;

pub use config::{ConfigProblem, DesignConfig, Mode, Preset};
pub use grid::{grid_index, grid_steps, initial_design, make_grid, snap};
pub use runner::{drive, run_design, run_personalized, run_standard, ResponseOracle, TrialRun};
pub use stopping::{check_stopping, StoppingState};
pub use trial::{
    derived_rng, derived_seed, posterior_optimum, Assignment, DoseRecommendation, EvaluatedDose, GridMass,
    IterationRecord, Outcome, StratumAnalysis, StratumRecommendation, SubmitProgress, Trial, TrialSnapshot,
    TrialStatus,
};
