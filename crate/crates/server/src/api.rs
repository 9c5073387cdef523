//! HTTP surface. Each endpoint delegates to one studio operation; bodies
//! are JSON. See docs/api.md for schemas and the error table.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::Router;
use cocreate_core::blob::sha256_hex;
use cocreate_core::evaluation::behavioral_metrics;
use cocreate_core::ideation::{IdeaPatch, NewIdea};
use cocreate_core::ids::{IdeaId, ImageId, JobId, SessionId, TabId};
use cocreate_core::session::SessionError;
use cocreate_core::sketch::Violation;
use cocreate_core::{SessionHandle, Studio, StudioError, VariationRequest};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::jobs::{JobRegistry, Outcome, Started};
use crate::store::SessionStore;

const MAX_BODY: usize = 1 << 20;
const MAX_COUNT: usize = 30;

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<Violation>>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, detail: impl Into<String>) -> Self {
        Self {
            status,
            code,
            detail: detail.into(),
            parameter: None,
            violations: None,
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", detail)
    }

    pub fn not_found(kind: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{kind} `{id}` not found"))
    }

    fn internal(detail: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", detail)
    }

    pub fn outcome(&self) -> Outcome {
        (self.status, serde_json::to_value(self).expect("error serializes"))
    }
}

impl From<StudioError> for ApiError {
    fn from(e: StudioError) -> Self {
        let detail = e.to_string();
        match e {
            StudioError::Session(SessionError::NotFound { .. }) => {
                Self::new(StatusCode::NOT_FOUND, "not_found", detail)
            }
            StudioError::Session(SessionError::Invalid(_)) => Self::invalid(detail),
            StudioError::Session(SessionError::Integrity { .. } | SessionError::Sequence { .. }) => {
                Self::new(StatusCode::CONFLICT, "conflict", detail)
            }
            StudioError::Session(SessionError::Storage { .. }) | StudioError::Blob(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_error", detail)
            }
            StudioError::Provider(_) => Self::new(StatusCode::BAD_GATEWAY, "provider_error", detail),
            StudioError::Schema(_) => Self::new(StatusCode::BAD_GATEWAY, "provider_schema", detail),
            StudioError::SketchSynthesis { violations } => Self {
                violations: Some(violations),
                ..Self::new(StatusCode::BAD_GATEWAY, "sketch_synthesis_failed", detail)
            },
            StudioError::Selection(s) => Self {
                parameter: Some(s.parameter().to_string()),
                ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_selection", detail)
            },
            StudioError::Grid(_) => Self::new(StatusCode::BAD_GATEWAY, "image_format", detail),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        respond(self.outcome())
    }
}

fn respond((status, body): Outcome) -> Response {
    (status, axum::Json(body)).into_response()
}

fn ok(status: StatusCode, body: impl Serialize) -> Outcome {
    (status, serde_json::to_value(body).expect("response serializes"))
}

type ApiResult = Result<Response, ApiError>;

/// Empty bodies count as `{}` so all-optional requests need no body.
fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    let raw: &[u8] = if body.iter().all(u8::is_ascii_whitespace) {
        b"{}"
    } else {
        body
    };
    serde_json::from_slice(raw).map_err(|e| ApiError::invalid(format!("request body: {e}")))
}

fn check_count(count: Option<usize>) -> Result<(), ApiError> {
    match count {
        Some(c) if c == 0 || c > MAX_COUNT => Err(ApiError::invalid(format!(
            "count must be between 1 and {MAX_COUNT}"
        ))),
        _ => Ok(()),
    }
}

#[derive(Default)]
struct Stored {
    fingerprint: String,
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

/// Responses remembered per Idempotency-Key, for the life of the process.
#[derive(Default)]
pub struct Idempotency {
    slots: parking_lot::Mutex<HashMap<String, Arc<tokio::sync::Mutex<Option<Stored>>>>>,
}

impl Idempotency {
    fn slot(&self, key: &str) -> Arc<tokio::sync::Mutex<Option<Stored>>> {
        self.slots.lock().entry(key.to_string()).or_default().clone()
    }
}

#[derive(Clone)]
pub struct App {
    pub studio: Arc<Studio>,
    pub store: Arc<SessionStore>,
    pub jobs: Arc<JobRegistry>,
    idempotency: Arc<Idempotency>,
}

impl App {
    pub fn new(studio: Studio, store: SessionStore, wait: Duration) -> Self {
        let jobs = Arc::new(JobRegistry::new(studio.ids.clone(), wait));
        Self {
            studio: Arc::new(studio),
            store: Arc::new(store),
            jobs,
            idempotency: Arc::default(),
        }
    }

    fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.store
            .get(&SessionId::new(id))
            .ok_or_else(|| ApiError::not_found("session", id))
    }

    fn session_with_idea(&self, id: &IdeaId) -> Result<Arc<SessionHandle>, ApiError> {
        self.store
            .find(|s| s.idea(id).is_some())
            .ok_or_else(|| ApiError::not_found("idea", id.as_str()))
    }

    fn session_with_image(&self, id: &ImageId) -> Result<Arc<SessionHandle>, ApiError> {
        self.store
            .find(|s| s.image(id).is_some())
            .ok_or_else(|| ApiError::not_found("image", id.as_str()))
    }

    fn session_with_tab(&self, id: &TabId) -> Result<Arc<SessionHandle>, ApiError> {
        self.store
            .find(|s| s.tab(id).is_some())
            .ok_or_else(|| ApiError::not_found("tab", id.as_str()))
    }

    /// Short operation on the blocking pool (appends fsync).
    async fn quick(
        &self,
        work: impl FnOnce(&Studio) -> Result<Outcome, StudioError> + Send + 'static,
    ) -> ApiResult {
        let studio = self.studio.clone();
        let outcome = tokio::task::spawn_blocking(move || work(&studio))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))??;
        Ok(respond(outcome))
    }

    /// Provider-bound operation: answered inline if it finishes within the
    /// wait budget, else 202 with a job handle.
    async fn generation(
        &self,
        work: impl FnOnce(&Studio) -> Result<Outcome, StudioError> + Send + 'static,
    ) -> ApiResult {
        let studio = self.studio.clone();
        let started = self
            .jobs
            .start(move || work(&studio).unwrap_or_else(|e| ApiError::from(e).outcome()))
            .await;
        Ok(match started {
            Started::Done(outcome) => respond(outcome),
            Started::Pending(job_id) => respond(ok(
                StatusCode::ACCEPTED,
                json!({"job_id": job_id, "status": "pending"}),
            )),
        })
    }
}

pub fn router(app: App) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/:id", get(get_session))
        .route("/sessions/:id/brainstorm", post(brainstorm))
        .route("/sessions/:id/ideas", post(create_idea))
        .route("/sessions/:id/ideas/expand", post(expand_ideas))
        .route("/sessions/:id/events", get(session_events))
        .route("/sessions/:id/metrics", get(session_metrics))
        .route("/ideas/:id", patch(edit_idea).delete(delete_idea))
        .route("/ideas/:id/generate", post(generate_idea_image))
        .route("/images/:id", get(image_bytes))
        .route("/images/:id/refine-tab", post(open_refine_tab))
        .route("/images/:id/download", post(download_image))
        .route("/tabs/:id/refine", post(refine))
        .route("/tabs/:id/render", post(render))
        .route("/tabs/:id/generate", post(generate_variation))
        .route("/jobs/:id", get(get_job))
        .layer(middleware::from_fn_with_state(app.clone(), idempotency))
        .with_state(app)
}

/// Replays the stored response for a repeated Idempotency-Key; a key reused
/// with a different request is rejected. 5xx responses are not stored, so
/// a retry after a provider failure runs again.
async fn idempotency(State(app): State<App>, req: Request, next: Next) -> Response {
    if matches!(*req.method(), Method::GET | Method::HEAD) {
        return next.run(req).await;
    }
    let Some(key) = req
        .headers()
        .get("idempotency-key")
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
    else {
        return next.run(req).await;
    };
    let (parts, body) = req.into_parts();
    let Ok(bytes) = axum::body::to_bytes(body, MAX_BODY).await else {
        return ApiError::invalid("request body too large").into_response();
    };
    let mut material = format!("{} {}\n", parts.method, parts.uri.path()).into_bytes();
    material.extend_from_slice(&bytes);
    let fingerprint = sha256_hex(&material);

    let slot = app.idempotency.slot(&key);
    let mut stored = slot.lock().await;
    if let Some(s) = stored.as_ref() {
        if s.fingerprint != fingerprint {
            return ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "idempotency_key_reused",
                format!("Idempotency-Key `{key}` was used for a different request"),
            )
            .into_response();
        }
        let mut resp = Response::new(Body::from(s.body.clone()));
        *resp.status_mut() = s.status;
        if let Some(ct) = &s.content_type {
            resp.headers_mut().insert(header::CONTENT_TYPE, ct.clone());
        }
        resp.headers_mut()
            .insert("idempotent-replayed", HeaderValue::from_static("true"));
        return resp;
    }

    let resp = next.run(Request::from_parts(parts, Body::from(bytes))).await;
    let (rparts, rbody) = resp.into_parts();
    let Ok(rbytes) = axum::body::to_bytes(rbody, usize::MAX).await else {
        return ApiError::internal("response body unreadable").into_response();
    };
    if !rparts.status.is_server_error() {
        *stored = Some(Stored {
            fingerprint,
            status: rparts.status,
            content_type: rparts.headers.get(header::CONTENT_TYPE).cloned(),
            body: rbytes.clone(),
        });
    }
    Response::from_parts(rparts, Body::from(rbytes))
}

#[derive(Deserialize)]
struct CreateSession {
    task_prompt: String,
}

async fn create_session(State(app): State<App>, body: Bytes) -> ApiResult {
    let req: CreateSession = parse(&body)?;
    let store = app.store.clone();
    app.quick(move |studio| {
        let handle = store.create(studio, &req.task_prompt)?;
        Ok(ok(StatusCode::CREATED, handle.snapshot()))
    })
    .await
}

async fn list_sessions(State(app): State<App>) -> ApiResult {
    Ok(respond(ok(StatusCode::OK, json!({"sessions": app.store.ids()}))))
}

async fn get_session(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let session = app.session(&id)?;
    Ok(respond(ok(StatusCode::OK, session.snapshot())))
}

#[derive(Deserialize)]
struct Brainstorm {
    #[serde(default)]
    prompt: Option<String>,
    #[serde(default)]
    count: Option<usize>,
}

async fn brainstorm(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: Brainstorm = parse(&body)?;
    check_count(req.count)?;
    let session = app.session(&id)?;
    app.generation(move |studio| {
        let ideas = studio.brainstorm(&session, req.prompt.as_deref(), req.count)?;
        Ok(ok(StatusCode::OK, json!({ "ideas": ideas })))
    })
    .await
}

#[derive(Deserialize)]
struct Expand {
    #[serde(default)]
    extra_context: Option<String>,
    #[serde(default)]
    count: Option<usize>,
}

async fn expand_ideas(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: Expand = parse(&body)?;
    check_count(req.count)?;
    let session = app.session(&id)?;
    app.generation(move |studio| {
        let ideas = studio.expand_ideas(&session, req.extra_context.as_deref(), req.count)?;
        Ok(ok(StatusCode::OK, json!({ "ideas": ideas })))
    })
    .await
}

async fn create_idea(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let new: NewIdea = parse(&body)?;
    let session = app.session(&id)?;
    app.quick(move |studio| Ok(ok(StatusCode::CREATED, studio.create_idea(&session, new)?)))
        .await
}

async fn edit_idea(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let patch: IdeaPatch = parse(&body)?;
    let idea_id = IdeaId::new(id);
    let session = app.session_with_idea(&idea_id)?;
    app.quick(move |studio| Ok(ok(StatusCode::OK, studio.edit_idea(&session, &idea_id, patch)?)))
        .await
}

async fn delete_idea(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let idea_id = IdeaId::new(id);
    let session = app.session_with_idea(&idea_id)?;
    app.quick(move |studio| {
        studio.delete_idea(&session, &idea_id)?;
        Ok(ok(StatusCode::OK, json!({ "deleted": idea_id })))
    })
    .await
}

async fn generate_idea_image(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let idea_id = IdeaId::new(id);
    let session = app.session_with_idea(&idea_id)?;
    app.generation(move |studio| {
        Ok(ok(StatusCode::OK, studio.generate_idea_image(&session, &idea_id)?))
    })
    .await
}

async fn image_bytes(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let image_id = ImageId::new(id);
    let session = app.session_with_image(&image_id)?;
    let record = session
        .read(|s| s.image(&image_id).cloned())
        .ok_or_else(|| ApiError::not_found("image", image_id.as_str()))?;
    let studio = app.studio.clone();
    let bytes = tokio::task::spawn_blocking(move || studio.image_bytes(&record))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

async fn open_refine_tab(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let image_id = ImageId::new(id);
    let session = app.session_with_image(&image_id)?;
    app.quick(move |studio| {
        Ok(ok(StatusCode::CREATED, studio.open_refine_tab(&session, &image_id)?))
    })
    .await
}

async fn download_image(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let image_id = ImageId::new(id);
    let session = app.session_with_image(&image_id)?;
    app.quick(move |studio| Ok(ok(StatusCode::OK, studio.mark_downloaded(&session, &image_id)?)))
        .await
}

#[derive(Deserialize)]
struct Refine {
    refine_prompt: String,
}

async fn refine(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: Refine = parse(&body)?;
    let tab_id = TabId::new(id);
    let session = app.session_with_tab(&tab_id)?;
    app.generation(move |studio| {
        let sketch = studio.refine(&session, &tab_id, &req.refine_prompt)?;
        Ok(ok(
            StatusCode::OK,
            json!({ "tab_id": tab_id, "sketch": sketch }),
        ))
    })
    .await
}

async fn render(State(app): State<App>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let req: VariationRequest = parse(&body)?;
    let tab_id = TabId::new(id);
    let session = app.session_with_tab(&tab_id)?;
    app.quick(move |studio| Ok(ok(StatusCode::OK, studio.preview(&session, &tab_id, &req)?)))
        .await
}

async fn generate_variation(
    State(app): State<App>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let req: VariationRequest = parse(&body)?;
    let tab_id = TabId::new(id);
    let session = app.session_with_tab(&tab_id)?;
    // reject bad selections before queueing any work
    app.studio.preview(&session, &tab_id, &req)?;
    app.generation(move |studio| {
        Ok(ok(StatusCode::OK, studio.generate_variation(&session, &tab_id, &req)?))
    })
    .await
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: Option<u64>,
}

async fn session_events(
    State(app): State<App>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult {
    let session = app.session(&id)?;
    let after = q.after.unwrap_or(0);
    let events: Vec<_> = session.events().into_iter().filter(|e| e.seq > after).collect();
    Ok(respond(ok(StatusCode::OK, json!({ "events": events }))))
}

async fn session_metrics(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let session = app.session(&id)?;
    let metrics =
        behavioral_metrics(&session.events()).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(respond(ok(StatusCode::OK, metrics)))
}

async fn get_job(State(app): State<App>, Path(id): Path<String>) -> ApiResult {
    let view = app
        .jobs
        .get(&JobId::new(id.clone()))
        .ok_or_else(|| ApiError::not_found("job", &id))?;
    Ok(respond(ok(StatusCode::OK, view)))
}
