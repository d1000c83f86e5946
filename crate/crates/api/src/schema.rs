//! Request and response bodies. Every response carries [`SCHEMA_VERSION`].

use bayesdose_core::design::{
    Assignment, DesignConfig, DoseRecommendation, GridMass, Outcome, SubmitProgress, TrialSnapshot, TrialStatus,
};
use bayesdose_core::gp::Covariates;
use bayesdose_core::Dose;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

/// How responses relate to clinical efficacy. Outcomes are always submitted
/// on the objective scale, which the design minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// Objective is the negated efficacy: submit `-efficacy`, lower is better.
    #[default]
    NegatedEfficacy,
}

/// Contents of a trial's `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    pub schema_version: u32,
    pub id: String,
    pub sign_convention: SignConvention,
    pub design: DesignConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateTrial {
    /// Client-chosen id; a random one is assigned when absent.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub design: DesignConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitOutcomes {
    /// Client-generated id making the submission idempotent.
    #[serde(default)]
    pub cohort_id: Option<String>,
    pub outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub schema_version: u32,
    pub id: String,
    pub sign_convention: SignConvention,
    pub status: TrialStatus,
    /// Assignments awaiting outcomes.
    pub pending: Vec<Assignment>,
    pub snapshot: TrialSnapshot,
    /// Present once the trial has ended.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recommendation: Option<DoseRecommendation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub schema_version: u32,
    pub id: String,
    pub cohort_id: Option<String>,
    /// True when `cohort_id` had already been applied; nothing changed.
    pub duplicate: bool,
    pub progress: SubmitProgress,
    pub trial: TrialView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub dose: Dose,
    pub mean: f64,
    pub sd: f64,
    pub acquisition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorView {
    pub schema_version: u32,
    pub id: String,
    pub sign_convention: SignConvention,
    pub iteration: usize,
    pub n: usize,
    pub stratum: usize,
    pub covariates: Covariates,
    /// One row per grid point in lexicographic dose order.
    pub grid: Vec<PosteriorRow>,
    pub effective_best: Dose,
    pub max_acquisition: f64,
    /// Dose that would be tried next in this stratum, if enrolling.
    pub next_dose: Option<Dose>,
    /// Grid minimizer of the posterior mean.
    pub point_estimate: Dose,
    /// Posterior distribution of the optimal dose over the grid.
    pub optimum_distribution: Vec<GridMass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationView {
    pub schema_version: u32,
    pub id: String,
    pub sign_convention: SignConvention,
    pub status: TrialStatus,
    pub recommendation: DoseRecommendation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldProblem {
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub schema_version: u32,
    /// Machine-readable kind: `invalid_request`, `not_found`, `conflict`,
    /// `invalid_state` or `internal`.
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldProblem>,
}
