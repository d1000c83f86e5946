//! HTTP service for conducting a live adaptive dose-finding trial.
//!
//! | Method | Path | Body / query | Response |
//! |---|---|---|---|
//! | `POST` | `/trials` | [`CreateTrial`] | `201` [`TrialView`] |
//! | `GET` | `/trials/{id}` | | [`TrialView`] |
//! | `POST` | `/trials/{id}/outcomes` | [`SubmitOutcomes`] | [`SubmitResult`] |
//! | `GET` | `/trials/{id}/posterior` | `?stratum=k` | [`PosteriorView`] |
//! | `GET` | `/trials/{id}/recommendation` | | [`RecommendationView`] |
//!
//! Errors use [`ErrorBody`]: `400` for malformed or invalid requests (with
//! per-field diagnostics), `404` for unknown trials and `409` for assignment
//! conflicts or requests the trial's state does not allow.

mod error;
pub mod schema;
pub mod store;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use bayesdose_core::design::TrialStatus;
use serde::de::DeserializeOwned;
use serde::Deserialize;

pub use error::ApiError;
pub use schema::*;
pub use store::{replay, Event, TrialState, TrialStore};

pub fn router(store: Arc<TrialStore>) -> Router {
    Router::new()
        .route("/trials", post(create_trial))
        .route("/trials/:id", get(get_trial))
        .route("/trials/:id/outcomes", post(submit_outcomes))
        .route("/trials/:id/posterior", get(get_posterior))
        .route("/trials/:id/recommendation", get(get_recommendation))
        .with_state(store)
}

/// Parses a JSON body, reporting the path of the offending field.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let message = e.inner().to_string();
        ApiError::InvalidRequest {
            message: format!("malformed request body: {message}"),
            fields: vec![FieldProblem {
                field: if field == "." { String::new() } else { field },
                message,
            }],
        }
    })
}

impl TrialState {
    pub fn view(&self) -> Result<TrialView, ApiError> {
        let recommendation = match self.trial.status() {
            TrialStatus::StoppedEarly | TrialStatus::BudgetComplete => Some(self.trial.recommend()?),
            _ => None,
        };
        Ok(TrialView {
            schema_version: SCHEMA_VERSION,
            id: self.config.id.clone(),
            sign_convention: self.config.sign_convention,
            status: self.trial.status(),
            pending: self.trial.pending().to_vec(),
            snapshot: self.trial.snapshot(),
            recommendation,
        })
    }

    pub fn posterior(&self, stratum: usize) -> Result<PosteriorView, ApiError> {
        let analyses = self.trial.analyses();
        if analyses.is_empty() {
            return Err(ApiError::InvalidState(
                "no fitted model yet; complete the initial cohort".into(),
            ));
        }
        let a = analyses
            .get(stratum)
            .ok_or_else(|| ApiError::invalid_field("stratum", &format!("must be below {}", analyses.len())))?;
        let recommendation = self.trial.recommend()?;
        let grid = self
            .trial
            .grid()
            .iter()
            .enumerate()
            .map(|(i, d)| PosteriorRow {
                dose: d.clone(),
                mean: a.mean[i],
                sd: a.sd[i],
                acquisition: a.acquisition[i],
            })
            .collect();
        let next_dose = self
            .trial
            .pending()
            .iter()
            .find(|p| p.stratum == stratum)
            .map(|p| p.dose.clone());
        Ok(PosteriorView {
            schema_version: SCHEMA_VERSION,
            id: self.config.id.clone(),
            sign_convention: self.config.sign_convention,
            iteration: recommendation.iteration,
            n: self.trial.n(),
            stratum,
            covariates: a.covariates.clone(),
            grid,
            effective_best: a.effective_best.clone(),
            max_acquisition: a.max_acquisition,
            next_dose,
            point_estimate: a.point_estimate.clone(),
            optimum_distribution: recommendation.strata[stratum].optimum_distribution.clone(),
        })
    }

    pub fn recommendation(&self) -> Result<RecommendationView, ApiError> {
        if self.trial.analyses().is_empty() {
            return Err(ApiError::InvalidState(
                "no fitted model yet; complete the initial cohort".into(),
            ));
        }
        Ok(RecommendationView {
            schema_version: SCHEMA_VERSION,
            id: self.config.id.clone(),
            sign_convention: self.config.sign_convention,
            status: self.trial.status(),
            recommendation: self.trial.recommend()?,
        })
    }
}

/// Runs blocking store work (fits, file I/O) off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::Internal(format!("worker panicked: {e}")))?
}

async fn create_trial(
    State(store): State<Arc<TrialStore>>,
    body: Bytes,
) -> Result<(StatusCode, Json<TrialView>), ApiError> {
    let req: CreateTrial = parse_body(&body)?;
    let view = blocking(move || store.create(req.id, req.design)?.view()).await?;
    tracing::info!(id = %view.id, "trial created");
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_trial(State(store): State<Arc<TrialStore>>, Path(id): Path<String>) -> Result<Json<TrialView>, ApiError> {
    Ok(Json(blocking(move || store.get(&id)?.view()).await?))
}

async fn submit_outcomes(
    State(store): State<Arc<TrialStore>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SubmitResult>, ApiError> {
    let req: SubmitOutcomes = parse_body(&body)?;
    let result = blocking(move || {
        let cohort_id = req.cohort_id.clone();
        let sub = store.submit(&id, req.cohort_id, req.outcomes)?;
        Ok(SubmitResult {
            schema_version: SCHEMA_VERSION,
            id,
            cohort_id,
            duplicate: sub.duplicate,
            progress: sub.progress,
            trial: sub.state.view()?,
        })
    })
    .await?;
    Ok(Json(result))
}

#[derive(Debug, Deserialize)]
struct StratumQuery {
    stratum: Option<String>,
}

async fn get_posterior(
    State(store): State<Arc<TrialStore>>,
    Path(id): Path<String>,
    Query(q): Query<StratumQuery>,
) -> Result<Json<PosteriorView>, ApiError> {
    let stratum = match q.stratum.as_deref() {
        None => 0,
        Some(s) => s
            .parse()
            .map_err(|_| ApiError::invalid_field("stratum", "must be a non-negative integer"))?,
    };
    Ok(Json(blocking(move || store.get(&id)?.posterior(stratum)).await?))
}

async fn get_recommendation(
    State(store): State<Arc<TrialStore>>,
    Path(id): Path<String>,
) -> Result<Json<RecommendationView>, ApiError> {
    Ok(Json(blocking(move || store.get(&id)?.recommendation()).await?))
}
