//! HTTP/JSON API.
//!
//! | method | path | success |
//! |---|---|---|
//! | POST | `/api/jobs` | 202 `{job_id}` |
//! | GET | `/api/jobs/{id}` | 200 job snapshot |
//! | GET | `/api/jobs/{id}/events` | 200 `text/event-stream` |
//! | GET | `/api/jobs/{id}/prd` | 200 `text/markdown` (`?variant=raw` for the unresolved text) |
//! | GET | `/api/jobs/{id}/versions/{k}` | 200 `text/html` |
//! | GET | `/healthz` | 200 |
//!
//! Errors share one body shape, `{error, detail, fields?}`.

use std::convert::Infallible;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use fd_core::job::{ErrorBody, FieldError, SubmitJob, SubmitResponse};
use futures::stream::{self, Stream};
use serde::Deserialize;
use serde_json::json;

use crate::jobs::{blocking, JobHandle};
use crate::{is_job_id, Service, SubmitError};

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, detail: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                error: error.to_string(),
                detail: detail.into(),
                fields: Vec::new(),
            },
        }
    }

    fn not_found(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", detail)
    }

    fn validation(fields: Vec<FieldError>) -> Self {
        let detail = fields
            .iter()
            .map(|f| format!("{}: {}", f.field, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        let mut e = Self::new(StatusCode::BAD_REQUEST, "validation_failed", detail);
        e.body.fields = fields;
        e
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<SubmitError> for ApiError {
    fn from(e: SubmitError) -> Self {
        match e {
            SubmitError::Invalid(fields) => ApiError::validation(fields),
            SubmitError::CapacityExceeded(_) => {
                ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "capacity_exceeded", e.to_string())
            }
            SubmitError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/api/jobs", post(submit))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/events", get(events))
        .route("/api/jobs/{id}/prd", get(get_prd))
        .route("/api/jobs/{id}/versions/{k}", get(get_version))
        .fallback(|| async { ApiError::not_found("no such route") })
        .with_state(service)
}

/// Serves the API until the listener fails.
pub async fn serve(service: Service, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(service)).await
}

async fn health(State(svc): State<Service>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "jobs": svc.job_count().await}))
}

async fn submit(State(svc): State<Service>, body: Bytes) -> Result<(StatusCode, Json<SubmitResponse>), ApiError> {
    let req: SubmitJob = serde_json::from_slice(&body).map_err(|e| {
        ApiError::validation(vec![FieldError {
            field: "body".into(),
            message: e.to_string(),
        }])
    })?;
    let job_id = svc.submit(req).await?;
    Ok((StatusCode::ACCEPTED, Json(SubmitResponse { job_id })))
}

async fn lookup(svc: &Service, id: &str) -> Result<Arc<JobHandle>, ApiError> {
    if !is_job_id(id) {
        return Err(ApiError::not_found(format!("no job {id:?}")));
    }
    svc.job(id).await.ok_or_else(|| ApiError::not_found(format!("no job {id}")))
}

async fn get_job(State(svc): State<Service>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let job = lookup(&svc, &id).await?;
    Ok(Json(job.snapshot().await).into_response())
}

async fn read_artifact(job: &JobHandle, rel: &str) -> Result<Vec<u8>, ApiError> {
    let path = job.dir().path(rel);
    let rel = rel.to_string();
    blocking(move || std::fs::read(path))
        .await
        .map_err(|_| ApiError::not_found(format!("{rel} is not available")))
}

#[derive(Deserialize)]
struct PrdQuery {
    variant: Option<String>,
}

async fn get_prd(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Query(q): Query<PrdQuery>,
) -> Result<Response, ApiError> {
    let job = lookup(&svc, &id).await?;
    let candidates: &[&str] = match q.variant.as_deref() {
        None => &["prd.resolved.md", "prd.md"],
        Some("resolved") => &["prd.resolved.md"],
        Some("raw") => &["prd.md"],
        Some(other) => {
            return Err(ApiError::validation(vec![FieldError {
                field: "variant".into(),
                message: format!("expected raw or resolved, got {other:?}"),
            }]))
        }
    };
    for rel in candidates {
        if let Ok(bytes) = read_artifact(&job, rel).await {
            return Ok(([(header::CONTENT_TYPE, "text/markdown; charset=utf-8")], bytes).into_response());
        }
    }
    Err(ApiError::not_found("requirements document not written yet"))
}

async fn get_version(
    State(svc): State<Service>,
    Path((id, k)): Path<(String, String)>,
) -> Result<Response, ApiError> {
    let job = lookup(&svc, &id).await?;
    let missing = || ApiError::not_found(format!("job {id} has no version {k}"));
    let index: u32 = k.parse().map_err(|_| missing())?;
    let path = job
        .snapshot()
        .await
        .versions
        .iter()
        .find(|v| v.index == index)
        .map(|v| v.path.clone())
        .ok_or_else(missing)?;
    let bytes = read_artifact(&job, &path).await?;
    Ok(([(header::CONTENT_TYPE, "text/html; charset=utf-8")], bytes).into_response())
}

/// Replays past events, then follows live ones; closes after the terminal
/// event. A `Last-Event-ID` header resumes after that sequence number.
async fn events(
    State(svc): State<Service>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let job = lookup(&svc, &id).await?;
    let after: u64 = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0);
    let rx = job.subscribe();

    struct Cursor {
        job: Arc<JobHandle>,
        rx: tokio::sync::watch::Receiver<usize>,
        next: usize,
        after: u64,
        pending: std::collections::VecDeque<fd_core::job::JobEvent>,
        done: bool,
    }

    let cursor = Cursor {
        job,
        rx,
        next: 0,
        after,
        pending: Default::default(),
        done: false,
    };

    let stream = stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(e) = c.pending.pop_front() {
                if e.seq() <= c.after {
                    continue;
                }
                if e.is_terminal() {
                    c.done = true;
                }
                let event = Event::default()
                    .event(e.kind())
                    .id(e.seq().to_string())
                    .json_data(&e)
                    .unwrap_or_else(|_| Event::default().comment("unserializable event"));
                return Some((Ok(event), c));
            }
            if c.done {
                return None;
            }
            c.rx.borrow_and_update();
            let (batch, terminal) = c.job.events_from(c.next).await;
            c.next += batch.len();
            if batch.is_empty() {
                if terminal {
                    return None;
                }
                if c.rx.changed().await.is_err() {
                    return None;
                }
                continue;
            }
            c.pending.extend(batch);
        }
    });

    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}
