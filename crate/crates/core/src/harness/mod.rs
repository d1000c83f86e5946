//! Monte-Carlo evaluation of designs against known scenarios.
//!
//! [`run_mc`] runs independent seeded replicates in parallel and reports,
//! per iteration and scenario stratum, the distance of the recommended dose
//! from the optimum in grid units, the root posterior squared error at the
//! recommended dose, the absolute error of its posterior mean, and the cost
//! measures (sample size and distinct doses). [`calibrate_delta`] turns a
//! no-stopping pilot into stopping thresholds for target sample sizes.

mod calibrate;
mod mc;
mod metrics;

pub use calibrate::{
    aei_quantiles, calibrate_delta, calibration_from_pilot, propose_delta, AeiQuantiles, DeltaCalibration,
    DeltaProposal,
};
pub use mc::{
    check_compatible, replicate_seed, run_mc, FinalSummary, IterationSummary, McOptions, McResult, MetricRecord,
    ReplicateFailure, ReplicateRun, ResolvedConfig, ScenarioOracle, Summary,
};
pub use metrics::{abs_dev, dose_units, quantile, rpsel};
