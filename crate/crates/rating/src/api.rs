//! HTTP handlers. No response carries metric scores or real model ids,
//! except the export, which is keyed like the metric series it joins.

use std::sync::Arc;

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use ctm_core::ratings::{aggregate_ratings, ExpertExport, RatingRecord};
use serde::{Deserialize, Serialize};

use crate::store::Store;

#[derive(Debug, Deserialize)]
pub struct RaterQuery {
    pub rater: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseItem {
    pub case_id: String,
    /// Blinded alias; send it back unchanged when rating.
    pub model_id: String,
    pub reference: String,
    pub candidate: String,
    pub rated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Submission {
    pub case_id: String,
    pub model_id: String,
    pub rater_id: String,
    pub rating: serde_json::Value,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub case_id: String,
    pub model_id: String,
    pub rater_id: String,
    pub rating: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub rated: usize,
    pub total: usize,
}

fn invalid(message: impl Into<String>) -> Response {
    (
        StatusCode::UNPROCESSABLE_ENTITY,
        Json(serde_json::json!({ "error": message.into() })),
    )
        .into_response()
}

async fn cases(State(store): State<Arc<Store>>, Query(q): Query<RaterQuery>) -> Json<Vec<CaseItem>> {
    let rated = q.rater.as_deref().map(|r| store.rated_by(r)).unwrap_or_default();
    Json(
        store
            .cases()
            .iter()
            .map(|c| CaseItem {
                case_id: c.case_id.clone(),
                model_id: c.alias.clone(),
                reference: c.reference.clone(),
                candidate: c.candidate.clone(),
                rated: rated.contains(&(c.case_id.clone(), c.model_id.clone())),
            })
            .collect(),
    )
}

async fn progress(State(store): State<Arc<Store>>, Query(q): Query<RaterQuery>) -> Json<Progress> {
    let rated = q.rater.as_deref().map(|r| store.rated_by(r)).unwrap_or_default();
    let done = store
        .cases()
        .iter()
        .filter(|c| rated.contains(&(c.case_id.clone(), c.model_id.clone())))
        .count();
    Json(Progress {
        rated: done,
        total: store.cases().len(),
    })
}

async fn submit(State(store): State<Arc<Store>>, body: Result<Json<Submission>, axum::extract::rejection::JsonRejection>) -> Response {
    let Ok(Json(s)) = body else {
        return invalid("body must be a JSON object with case_id, model_id, rater_id, rating");
    };
    let Some(rating) = s.rating.as_i64() else {
        return invalid("rating must be an integer from 1 to 5");
    };
    let Some(case) = store.lookup(&s.case_id, &s.model_id) else {
        return invalid(format!("unknown case {} / {}", s.case_id, s.model_id));
    };
    let record = match RatingRecord::validated(&case.case_id, &case.model_id, &s.rater_id, rating, s.comment, Utc::now()) {
        Ok(r) => r,
        Err(e) => return invalid(e.to_string()),
    };
    let accepted = Accepted {
        case_id: record.case_id.clone(),
        model_id: s.model_id,
        rater_id: record.rater_id.clone(),
        rating: record.rating,
    };
    let writer = store.clone();
    match tokio::task::spawn_blocking(move || writer.append(record)).await {
        Ok(Ok(())) => (StatusCode::CREATED, Json(accepted)).into_response(),
        Ok(Err(e)) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn export(State(store): State<Arc<Store>>) -> Json<ExpertExport> {
    Json(ExpertExport::new(aggregate_ratings(&store.records())))
}

pub fn routes(store: Arc<Store>) -> Router {
    Router::new()
        .route("/api/cases", get(cases))
        .route("/api/ratings", post(submit))
        .route("/api/progress", get(progress))
        .route("/api/export", get(export))
        .with_state(store)
}
