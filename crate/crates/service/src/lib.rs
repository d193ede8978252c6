//! Read-only HTTP API over one immutable aggregate snapshot.
//!
//! Every query endpoint hands its parameters to
//! [`vcfat_core::analytics::render_view`] and serializes the result as is.
//! The current snapshot sits behind an [`ArcSwap`]; a reload builds the
//! replacement off the async runtime and swaps the pointer, so a request
//! sees either the old or the new snapshot, never a mix. Every response
//! carries the build id of the snapshot that produced it in `x-build-id`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use arc_swap::ArcSwap;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Query, Request, State};
use axum::http::{header, HeaderMap, HeaderName, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use thiserror::Error;
use tower_http::services::ServeDir;

use vcfat_core::analytics::{meta, render_view, AggregateSnapshot, SnapshotError, ViewKind};
use vcfat_core::exec::Execution;
use vcfat_core::model::{QueryError, QueryParams};
use vcfat_core::pipeline::{ingest_files, IngestInputs, PipelineError};

pub const BUILD_ID_HEADER: HeaderName = HeaderName::from_static("x-build-id");
pub const ENV_BIND: &str = "VCFAT_BIND";
pub const ENV_ADMIN_TOKEN: &str = "VCFAT_ADMIN_TOKEN";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum LoadError {
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("loading snapshot: {0}")]
    Load(#[from] LoadError),
    #[error("binding {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid bind address {0:?}")]
    BadAddress(String),
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Where snapshots come from, at startup and on every reload.
#[derive(Debug, Clone)]
pub enum SnapshotSource {
    File(PathBuf),
    Inputs(IngestInputs),
}

impl SnapshotSource {
    pub fn load(&self) -> Result<AggregateSnapshot, LoadError> {
        Ok(match self {
            SnapshotSource::File(path) => AggregateSnapshot::load(path)?,
            SnapshotSource::Inputs(inputs) => ingest_files(inputs, Execution::default())?.snapshot(Execution::default()),
        })
    }
}

/// A snapshot plus the response bodies that never change for it.
pub struct Loaded {
    pub snapshot: AggregateSnapshot,
    build_id: HeaderValue,
    geojson: Vec<u8>,
}

impl Loaded {
    pub fn new(snapshot: AggregateSnapshot) -> Self {
        let build_id = HeaderValue::from_str(snapshot.build_id()).expect("hex build id");
        let geojson = serde_json::to_vec(&snapshot.neighborhoods().to_geojson()).expect("geojson serializes");
        Self { snapshot, build_id, geojson }
    }
}

pub struct AppState {
    current: ArcSwap<Loaded>,
    source: Option<SnapshotSource>,
    admin_token: Option<String>,
}

impl AppState {
    pub fn new(snapshot: AggregateSnapshot, source: Option<SnapshotSource>, admin_token: Option<String>) -> Self {
        Self {
            current: ArcSwap::from_pointee(Loaded::new(snapshot)),
            source,
            admin_token: admin_token.filter(|t| !t.is_empty()),
        }
    }

    pub fn current(&self) -> Arc<Loaded> {
        self.current.load_full()
    }

    /// Rebuilds from the configured source and swaps it in. Returns the new
    /// build id.
    pub async fn reload(&self) -> Result<String, ApiError> {
        let source = self.source.clone().ok_or_else(|| {
            ApiError::new(StatusCode::CONFLICT, "reload-unavailable", "service was started without a reloadable source")
        })?;
        let snapshot = tokio::task::spawn_blocking(move || source.load())
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "reload-failed", e.to_string()))?
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "reload-failed", e.to_string()))?;
        let build_id = snapshot.build_id().to_string();
        self.current.store(Arc::new(Loaded::new(snapshot)));
        tracing::info!(%build_id, "snapshot reloaded");
        Ok(build_id)
    }
}

/// JSON error body `{code, message}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self { status, code: code.to_string(), message: message.into() }
    }
}

impl From<QueryError> for ApiError {
    fn from(e: QueryError) -> Self {
        Self::new(StatusCode::BAD_REQUEST, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_vec(&self).expect("error serializes");
        (self.status, [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))], body).into_response()
    }
}

fn json_bytes(loaded: &Loaded, body: Vec<u8>) -> Response {
    (
        [
            (header::CONTENT_TYPE, HeaderValue::from_static("application/json")),
            (BUILD_ID_HEADER, loaded.build_id.clone()),
        ],
        body,
    )
        .into_response()
}

fn with_build_id(loaded: &Loaded, mut response: Response) -> Response {
    response.headers_mut().insert(BUILD_ID_HEADER, loaded.build_id.clone());
    response
}

async fn get_meta(State(state): State<Arc<AppState>>) -> Response {
    let loaded = state.current();
    json_bytes(&loaded, serde_json::to_vec(&meta(&loaded.snapshot)).expect("meta serializes"))
}

async fn get_neighborhoods(State(state): State<Arc<AppState>>) -> Response {
    let loaded = state.current();
    json_bytes(&loaded, loaded.geojson.clone())
}

fn view(state: &AppState, kind: ViewKind, params: Result<Query<QueryParams>, QueryRejection>) -> Response {
    let loaded = state.current();
    let result = params
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-parameter", e.body_text()))
        .and_then(|Query(p)| render_view(&loaded.snapshot, kind, &p).map_err(ApiError::from));
    match result {
        Ok(v) => json_bytes(&loaded, serde_json::to_vec(&v).expect("view serializes")),
        Err(e) => with_build_id(&loaded, e.into_response()),
    }
}

async fn get_aggregate(State(s): State<Arc<AppState>>, q: Result<Query<QueryParams>, QueryRejection>) -> Response {
    view(&s, ViewKind::Aggregate, q)
}

async fn get_timeline(State(s): State<Arc<AppState>>, q: Result<Query<QueryParams>, QueryRejection>) -> Response {
    view(&s, ViewKind::Timeline, q)
}

async fn get_colocate(State(s): State<Arc<AppState>>, q: Result<Query<QueryParams>, QueryRejection>) -> Response {
    view(&s, ViewKind::Colocate, q)
}

fn presented_token(headers: &HeaderMap) -> Option<&str> {
    if let Some(v) = headers.get(header::AUTHORIZATION).and_then(|v| v.to_str().ok()) {
        return v.strip_prefix("Bearer ").map(str::trim);
    }
    headers.get("x-admin-token").and_then(|v| v.to_str().ok()).map(str::trim)
}

/// Byte comparison whose running time does not depend on where the inputs
/// first differ.
fn same_secret(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.bytes().zip(b.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

#[derive(Serialize)]
struct Reloaded {
    build_id: String,
    previous_build_id: String,
}

async fn post_reload(State(state): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let before = state.current();
    let Some(expected) = state.admin_token.as_deref() else {
        return with_build_id(
            &before,
            ApiError::new(StatusCode::FORBIDDEN, "admin-disabled", format!("set {ENV_ADMIN_TOKEN} to enable reloads"))
                .into_response(),
        );
    };
    if !presented_token(&headers).is_some_and(|t| same_secret(t, expected)) {
        return with_build_id(
            &before,
            ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong admin token").into_response(),
        );
    }
    match state.reload().await {
        Ok(build_id) => {
            let after = state.current();
            let body = Reloaded { build_id, previous_build_id: before.snapshot.build_id().to_string() };
            json_bytes(&after, serde_json::to_vec(&body).expect("reload body serializes"))
        }
        Err(e) => with_build_id(&before, e.into_response()),
    }
}

const PLACEHOLDER: &str = "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>vcfat</title></head>\n<body><h1>vcfat</h1><p>No dashboard assets configured. API:</p><ul>\n<li><a href=\"/api/meta\">/api/meta</a></li>\n<li><a href=\"/api/neighborhoods\">/api/neighborhoods</a></li>\n<li><a href=\"/api/aggregate\">/api/aggregate</a></li>\n<li><a href=\"/api/timeline\">/api/timeline</a></li>\n<li><a href=\"/api/colocate\">/api/colocate</a></li>\n</ul></body></html>\n";

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not-found", "no such endpoint")
}

/// Fills in `x-build-id` on responses that did not set one (static files,
/// 404s).
async fn stamp_build_id(State(state): State<Arc<AppState>>, request: Request, next: Next) -> Response {
    let mut response = next.run(request).await;
    if !response.headers().contains_key(BUILD_ID_HEADER) {
        response.headers_mut().insert(BUILD_ID_HEADER, state.current().build_id.clone());
    }
    response
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/meta", get(get_meta))
        .route("/api/neighborhoods", get(get_neighborhoods))
        .route("/api/aggregate", get(get_aggregate))
        .route("/api/timeline", get(get_timeline))
        .route("/api/colocate", get(get_colocate))
        .route("/admin/reload", post(post_reload))
        .route("/api/{*rest}", get(not_found));
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })).fallback(not_found),
    };
    app.layer(middleware::from_fn_with_state(state.clone(), stamp_build_id)).with_state(state)
}

#[derive(Debug, Clone)]
pub struct ServeConfig {
    pub bind: SocketAddr,
    pub source: SnapshotSource,
    pub static_dir: Option<PathBuf>,
    pub admin_token: Option<String>,
}

impl ServeConfig {
    /// Bind address and admin token from the environment, falling back to
    /// [`DEFAULT_BIND`] and no admin endpoint.
    pub fn from_env(source: SnapshotSource, static_dir: Option<PathBuf>) -> Result<Self, ServeError> {
        let raw = std::env::var(ENV_BIND).ok().filter(|s| !s.is_empty()).unwrap_or_else(|| DEFAULT_BIND.to_string());
        let bind = raw.parse().map_err(|_| ServeError::BadAddress(raw))?;
        Ok(Self { bind, source, static_dir, admin_token: std::env::var(ENV_ADMIN_TOKEN).ok() })
    }
}

/// Loads the first snapshot, binds, and serves until Ctrl-C.
pub async fn serve(config: ServeConfig) -> Result<(), ServeError> {
    let source = config.source.clone();
    let snapshot = tokio::task::spawn_blocking(move || source.load())
        .await
        .map_err(|e| ServeError::Io(std::io::Error::other(e)))??;
    tracing::info!(build_id = snapshot.build_id(), "snapshot loaded");
    let state = Arc::new(AppState::new(snapshot, Some(config.source), config.admin_token));
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServeError::Bind { addr: config.bind, source })?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state, config.static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
