//! HTTP JSON API over the annotation store, plus the static UI bundle.
//!
//! | method | path | body / query |
//! |---|---|---|
//! | GET | `/api/next` | |
//! | GET | `/api/candidates/:id` | |
//! | POST | `/api/label` | `{candidate_id, label, annotator?}` |
//! | POST | `/api/skip` | `{candidate_id, annotator?}` |
//! | GET | `/api/progress` | |
//! | GET | `/api/cost` | |
//! | GET | `/api/export` | `?filter=human+positive` |
//! | GET | `/api/conflicts` | |
//!
//! When a token is configured every `/api` request must carry it as
//! `Authorization: Bearer <token>` or `X-Annotation-Token: <token>`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cxg_core::cost::CostParams;
use cxg_core::store::{AnnotationRecord, ExportFilter, Store, StoreError, VerbQuota};
use cxg_core::CandidateInstance;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tower_http::services::ServeDir;

pub struct AppState {
    pub store: Mutex<Store>,
    pub cost: CostParams,
    pub tp_required: u64,
    pub token: Option<String>,
    pub annotator: String,
}

impl AppState {
    pub fn new(store: Store, cost: CostParams, tp_required: u64) -> Self {
        AppState {
            store: Mutex::new(store),
            cost,
            tp_required,
            token: None,
            annotator: "annotator".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown candidate {0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("missing or wrong token")]
    Unauthorized,
    #[error("{0}")]
    Internal(String),
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(id) => ApiError::NotFound(id),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<AppState>;

/// What the annotation screen shows for one candidate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationView {
    pub candidate_id: String,
    pub sentence_id: String,
    pub text: String,
    /// `[start, end)` byte offsets into `text` per capture.
    pub spans: BTreeMap<String, (usize, usize)>,
    pub verb: Option<String>,
    pub quota: Option<VerbQuota>,
    /// Current human label, if any.
    pub label: Option<bool>,
}

fn view(store: &Store, c: &CandidateInstance) -> AnnotationView {
    let verb = c.verb_lemma();
    AnnotationView {
        candidate_id: c.candidate_id.clone(),
        sentence_id: c.sentence_id.clone(),
        text: c.text.clone(),
        spans: c.highlight_spans(),
        quota: verb.as_ref().and_then(|v| store.state().sampler.verbs.get(v).cloned()),
        verb,
        label: store.state().human_label(&c.candidate_id).map(|r| r.label),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct NextResponse {
    /// `None` once the queue is exhausted.
    pub candidate: Option<AnnotationView>,
}

#[derive(Debug, Deserialize)]
pub struct LabelRequest {
    pub candidate_id: String,
    pub label: bool,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct SkipRequest {
    pub candidate_id: String,
    #[serde(default)]
    pub annotator: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct ExportQuery {
    #[serde(default)]
    pub filter: Option<String>,
}

fn lock(state: &AppState) -> std::sync::MutexGuard<'_, Store> {
    state.store.lock().unwrap_or_else(|p| p.into_inner())
}

async fn next(State(state): State<Shared>) -> Json<NextResponse> {
    let store = lock(&state);
    Json(NextResponse {
        candidate: store.sample_next().map(|c| view(&store, c)),
    })
}

async fn candidate(State(state): State<Shared>, Path(id): Path<String>) -> Result<Json<AnnotationView>, ApiError> {
    let store = lock(&state);
    let c = store.candidate(&id).ok_or(ApiError::NotFound(id))?;
    Ok(Json(view(&store, c)))
}

async fn label(State(state): State<Shared>, Json(req): Json<LabelRequest>) -> Result<Json<AnnotationRecord>, ApiError> {
    let annotator = req.annotator.unwrap_or_else(|| state.annotator.clone());
    let record = lock(&state).submit_label(&req.candidate_id, req.label, &annotator)?;
    Ok(Json(record))
}

async fn skip(State(state): State<Shared>, Json(req): Json<SkipRequest>) -> Result<StatusCode, ApiError> {
    let annotator = req.annotator.unwrap_or_else(|| state.annotator.clone());
    lock(&state).skip(&req.candidate_id, &annotator)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn progress(State(state): State<Shared>) -> impl IntoResponse {
    Json(lock(&state).progress())
}

async fn cost(State(state): State<Shared>) -> impl IntoResponse {
    Json(lock(&state).cost_projection(&state.cost, state.tp_required))
}

async fn export(State(state): State<Shared>, Query(q): Query<ExportQuery>) -> Result<impl IntoResponse, ApiError> {
    let filter = ExportFilter::parse(q.filter.as_deref().unwrap_or("all")).map_err(ApiError::BadRequest)?;
    Ok(Json(lock(&state).export(&filter)))
}

async fn conflicts(State(state): State<Shared>) -> impl IntoResponse {
    Json(lock(&state).conflicts())
}

async fn require_token(State(state): State<Shared>, req: Request, next: Next) -> Result<Response, ApiError> {
    if let Some(token) = &state.token {
        let headers = req.headers();
        let bearer = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        let custom = headers.get("x-annotation-token").and_then(|v| v.to_str().ok());
        if bearer != Some(token.as_str()) && custom != Some(token.as_str()) {
            return Err(ApiError::Unauthorized);
        }
    }
    Ok(next.run(req).await)
}

const PLACEHOLDER: &str = "<!doctype html><title>annotation service</title>\
<p>The annotation UI is not built. The JSON API is available under <code>/api</code>.</p>";

/// API routes plus the UI bundle from `static_dir` at `/` (a placeholder
/// page when there is none).
pub fn router(state: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/next", get(next))
        .route("/candidates/:id", get(candidate))
        .route("/label", post(label))
        .route("/skip", post(skip))
        .route("/progress", get(progress))
        .route("/cost", get(cost))
        .route("/export", get(export))
        .route("/conflicts", get(conflicts))
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

pub async fn serve(addr: SocketAddr, state: Shared, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state, static_dir)).await
}
