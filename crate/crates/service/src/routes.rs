//! HTTP surface: scoring, latency, health, the patrol queue, labels,
//! curves and pipeline jobs.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use vandal_core::api::{BatchRequest, ErrorKind, LabelConflict, LabelRequest};
use vandal_core::eval::curve_slug;
use vandal_core::features::GroupSet;
use vandal_core::jobs::{self, Job};

use crate::error::ApiError;
use crate::labels::LabelError;
use crate::state::{now, Service};

type Shared = Arc<Service>;

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/v1/scores/{rev_id}", get(score_one))
        .route("/v1/scores", post(score_many))
        .route("/v1/latency", get(latency))
        .route("/v1/health", get(health))
        .route("/v1/ui/queue", get(queue))
        .route("/v1/labels", post(label))
        .route("/v1/labels/export", get(export_labels))
        .route("/v1/curves", get(curves))
        .route("/v1/jobs", post(run_job))
        .route("/v1/jobs/rerun", post(rerun_job))
        .with_state(service)
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ApiError> {
    payload.map(|Json(v)| v).map_err(|e| ApiError::new(ErrorKind::InvalidRequest, e.body_text()))
}

#[derive(Deserialize)]
struct ScoreQuery {
    #[serde(default)]
    refresh: bool,
}

async fn score_one(
    State(s): State<Shared>,
    Path(rev_id): Path<String>,
    Query(q): Query<ScoreQuery>,
) -> Result<Response, ApiError> {
    let rev_id: u64 = rev_id
        .parse()
        .map_err(|_| ApiError::new(ErrorKind::InvalidRequest, format!("rev_id {rev_id:?} is not a number")))?;
    Ok(Json(s.score_single(rev_id, q.refresh).await?).into_response())
}

async fn score_many(State(s): State<Shared>, payload: Result<Json<BatchRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let req = body(payload)?;
    Ok(Json(s.score_batch(&req.rev_ids, req.refresh).await?).into_response())
}

#[derive(Deserialize)]
struct LatencyQuery {
    format: Option<String>,
}

async fn latency(State(s): State<Shared>, Query(q): Query<LatencyQuery>) -> Response {
    let report = s.latency_report();
    match q.format.as_deref() {
        Some("csv") => ([(header::CONTENT_TYPE, "text/csv")], report.to_csv()).into_response(),
        _ => Json(report).into_response(),
    }
}

async fn health(State(s): State<Shared>) -> Response {
    Json(s.health()).into_response()
}

#[derive(Deserialize)]
struct QueueQuery {
    #[serde(default)]
    min_score: f64,
    #[serde(default = "first_page")]
    page: usize,
    #[serde(default = "page_size")]
    page_size: usize,
}

fn first_page() -> usize {
    1
}

fn page_size() -> usize {
    50
}

async fn queue(State(s): State<Shared>, Query(q): Query<QueueQuery>) -> Result<Response, ApiError> {
    Ok(Json(s.queue(q.min_score, q.page, q.page_size)?).into_response())
}

async fn label(State(s): State<Shared>, payload: Result<Json<LabelRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let req = body(payload)?;
    match s.labels.submit(&req, s.is_queued(req.rev_id), now()) {
        Ok(event) => Ok((StatusCode::CREATED, Json(event)).into_response()),
        Err(LabelError::Conflict(current)) => {
            let conflict = LabelConflict { error: ErrorKind::ConflictingConcurrentLabel, current };
            Ok((StatusCode::CONFLICT, Json(conflict)).into_response())
        }
        Err(LabelError::UnknownRevision(r)) => {
            Err(ApiError::new(ErrorKind::UnknownRevision, format!("revision {r} is not in the queue")))
        }
        Err(LabelError::Invalid(m)) => Err(ApiError::new(ErrorKind::InvalidRequest, m)),
        Err(LabelError::Io(m)) => Err(ApiError::new(ErrorKind::InvalidData, m)),
    }
}

#[derive(Deserialize)]
struct ExportQuery {
    #[serde(default)]
    history: bool,
}

async fn export_labels(State(s): State<Shared>, Query(q): Query<ExportQuery>) -> Response {
    ([(header::CONTENT_TYPE, "application/x-ndjson")], s.labels.export(q.history)).into_response()
}

#[derive(Deserialize)]
struct CurveQuery {
    #[serde(default = "all_groups")]
    combo: String,
    #[serde(default = "filter_kind")]
    kind: String,
}

fn all_groups() -> String {
    "all".into()
}

fn filter_kind() -> String {
    "filter".into()
}

async fn curves(State(s): State<Shared>, Query(q): Query<CurveQuery>) -> Result<Response, ApiError> {
    if !matches!(q.kind.as_str(), "filter" | "pr") {
        return Err(ApiError::new(ErrorKind::InvalidRequest, format!("kind {:?}, expected filter or pr", q.kind)));
    }
    let groups: GroupSet =
        q.combo.parse().map_err(|e| ApiError::new(ErrorKind::InvalidRequest, format!("combo {:?}: {e}", q.combo)))?;
    let slug = curve_slug(&groups);
    let dir = s.curves_dir().ok_or_else(|| ApiError::new(ErrorKind::MissingCurves, "no curves directory configured"))?;
    let path = dir.join(format!("curve_{}_{slug}.csv", q.kind));
    let text = tokio::fs::read_to_string(&path)
        .await
        .map_err(|e| ApiError::new(ErrorKind::MissingCurves, format!("{}: {e}", path.display())))?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], text).into_response())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, jobs::JobError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(ErrorKind::InvalidData, format!("job panicked: {e}")))?
        .map_err(ApiError::from)
}

async fn run_job(payload: Result<Json<Job>, JsonRejection>) -> Result<Response, ApiError> {
    let job = body(payload)?;
    Ok(Json(blocking(move || jobs::run(job)).await?).into_response())
}

#[derive(Deserialize)]
struct RerunRequest {
    manifest: PathBuf,
}

async fn rerun_job(payload: Result<Json<RerunRequest>, JsonRejection>) -> Result<Response, ApiError> {
    let req = body(payload)?;
    Ok(Json(blocking(move || jobs::rerun(&req.manifest)).await?).into_response())
}
