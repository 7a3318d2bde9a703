//! HTTP routes.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use vesselgen::cohort::BranchId;

use crate::error::{ApiError, ApiResult};
use crate::prompt::{indexed, IndexedPrompt, Prompt};
use crate::state::{finished_summary, App, JobRequest, JobStatus, SessionState};

pub fn router(app: Arc<App>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/prompts", post(add_prompt))
        .route("/sessions/{id}/prompts/{idx}", delete(remove_prompt))
        .route("/sessions/{id}/jobs", post(submit_job))
        .route("/jobs/{id}", get(poll_job))
        .route("/jobs/{id}/export", get(export_job))
        .with_state(app)
}

/// Parses a JSON body; an empty body means all defaults.
fn parse<T: DeserializeOwned + Default>(body: &Bytes) -> ApiResult<T> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn parse_required<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

#[derive(Debug, Deserialize)]
struct CreateSession {
    branch: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub branch: BranchId,
    pub model: String,
    pub prompts: Vec<IndexedPrompt>,
    pub jobs: Vec<String>,
}

impl From<SessionState> for SessionView {
    fn from(s: SessionState) -> Self {
        SessionView {
            prompts: indexed(&s.prompts),
            id: s.id,
            branch: s.branch,
            model: s.model,
            jobs: s.jobs,
        }
    }
}

async fn create_session(State(app): State<Arc<App>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_required(&body)?;
    let s = app.create_session(&req.branch)?;
    Ok((StatusCode::CREATED, Json(SessionView::from(s))))
}

async fn get_session(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    Ok(Json(app.get_session(&id)?.into()))
}

async fn add_prompt(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Vec<IndexedPrompt>>> {
    let prompt: Prompt = parse_required(&body)?;
    Ok(Json(indexed(&app.add_prompt(&id, prompt)?)))
}

async fn remove_prompt(
    State(app): State<Arc<App>>,
    Path((id, idx)): Path<(String, String)>,
) -> ApiResult<Json<Vec<IndexedPrompt>>> {
    let idx: usize = idx
        .parse()
        .map_err(|_| ApiError::bad_request(format!("prompt index {idx:?} is not a number")))?;
    Ok(Json(indexed(&app.remove_prompt(&id, idx)?)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobTicket {
    pub job_id: String,
    pub status: JobStatus,
}

async fn submit_job(State(app): State<Arc<App>>, Path(id): Path<String>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: JobRequest = parse(&body)?;
    let job = app.submit(&id, req)?;
    Ok((
        StatusCode::ACCEPTED,
        Json(JobTicket {
            job_id: job.id,
            status: job.status,
        }),
    ))
}

async fn poll_job(State(app): State<Arc<App>>, Path(id): Path<String>) -> ApiResult<Response> {
    let body = app.poll(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: String,
    /// Ensemble member to export; all members when absent (latent format only).
    sample: Option<usize>,
}

async fn export_job(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Query(q): Query<ExportQuery>,
) -> ApiResult<Response> {
    if q.format != "obj" && q.format != "latent" {
        return Err(ApiError::bad_request(format!("unknown export format {:?}; use obj or latent", q.format)));
    }
    let record = app.job_record(&id)?;
    let summary = finished_summary(&record).map_err(ApiError::conflict)?;
    let pick = |k: usize| {
        if k < summary.latents.len() {
            Ok(k)
        } else {
            Err(ApiError::not_found(format!("sample {k} (ensemble has {})", summary.latents.len())))
        }
    };
    match q.format.as_str() {
        "obj" => {
            let k = pick(q.sample.unwrap_or(0))?;
            let p = record.branch.preset();
            let mesh = summary.latents[k].mesh(p.mesh_u, p.mesh_v)?;
            Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], mesh.to_obj()).into_response())
        }
        _ => match q.sample {
            Some(k) => Ok(Json(&summary.latents[pick(k)?]).into_response()),
            None => Ok(Json(&summary.latents).into_response()),
        },
    }
}
