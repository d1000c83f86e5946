use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected (J={}, P={}), found (J={}, P={})", .expected.0, .expected.1, .found.0, .found.1)]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("insufficient data: need at least {needed} observations, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("covariance not positive definite at pivot {pivot} (n={n}) after jitter {jitter:e}")]
    NotPositiveDefinite { pivot: usize, n: usize, jitter: f64 },
    #[error("hyperparameter optimization failed from all {starts} starts")]
    AllStartsFailed { starts: usize },
}

#[derive(Debug, Error)]
pub enum DesignError {
    #[error("invalid design configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("assignment conflict: {0}")]
    Conflict(String),
    #[error("trial is not enrolling ({0})")]
    NotEnrolling(String),
    #[error("surrogate fit failed: {0}")]
    Fit(#[from] GpError),
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario `{0}`")]
    Unknown(String),
    #[error("stratum {stratum} out of range (scenario has {strata} strata)")]
    InvalidStratum { stratum: usize, strata: usize },
    #[error("scenario `{scenario}` failed validation: {}", .failures.join("; "))]
    Validation { scenario: String, failures: Vec<String> },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("all {0} replicates failed")]
    AllReplicatesFailed(usize),
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
