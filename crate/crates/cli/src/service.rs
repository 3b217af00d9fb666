//! JSON-over-HTTP API consumed by the operator UI.
//!
//! | route                                   | purpose                                |
//! |-----------------------------------------|----------------------------------------|
//! | `POST /api/augment`                     | generate drafts for a query            |
//! | `POST /api/search`                      | run the multi-draft search             |
//! | `GET  /api/keyframes/{id}/neighbors`    | keyframes around a result (`?pi=`)     |
//! | `GET  /api/keyframes/{id}/image`        | keyframe image bytes                   |
//! | `GET  /api/keyframes/{id}/video_link`   | source video url and timestamp         |
//! | `POST /api/submit`                      | forward a chosen keyframe to a webhook |
//! | `GET  /api/health`                      | liveness and index size                |
//!
//! All state is loaded at startup and never mutated.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use rapid_core::drafting::Drafter;
use rapid_core::keyframes::KeyframeRecord;
use rapid_core::pipeline::neighbor_window;
use rapid_core::{EmbeddingIndex, Engine, Error as CoreError, Manifest, SearchRequest};

use crate::config::{Defaults, ServiceConfig};

/// Source video location and frame rate for timestamp links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoMeta {
    pub video_id: String,
    pub url: String,
    #[serde(default)]
    pub fps: Option<f64>,
}

pub struct AppState {
    pub engine: Option<Engine>,
    pub drafter: Arc<dyn Drafter>,
    pub defaults: Defaults,
    pub videos: HashMap<String, VideoMeta>,
    pub submit_url: Option<String>,
}

impl AppState {
    /// Loads index, manifest and assets named by `config`.
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        config.check_paths()?;
        let manifest = Manifest::load(&config.manifest_path)?;
        let index = EmbeddingIndex::load(&config.store_path)?;
        let engine = Engine::new(index, manifest, config.embedder()?)?;
        let videos = match &config.video_meta_path {
            Some(p) => load_video_meta(p)?,
            None => HashMap::new(),
        };
        Ok(Self {
            engine: Some(engine),
            drafter: config.drafter()?,
            defaults: config.defaults,
            videos,
            submit_url: config.submit.url.clone(),
        })
    }
}

pub fn load_video_meta(path: &Path) -> anyhow::Result<HashMap<String, VideoMeta>> {
    let list: Vec<VideoMeta> = rapid_core::jsonl::read(path)?;
    Ok(list.into_iter().map(|v| (v.video_id.clone(), v)).collect())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/augment", post(augment))
        .route("/api/search", post(search))
        .route("/api/keyframes/:id/neighbors", get(neighbors))
        .route("/api/keyframes/:id/image", get(image))
        .route("/api/keyframes/:id/video_link", get(video_link))
        .route("/api/submit", post(submit))
        .with_state(state)
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let status = match &e {
            CoreError::Validation(_) => StatusCode::BAD_REQUEST,
            CoreError::NotFound(_) => StatusCode::NOT_FOUND,
            CoreError::Transport(_) | CoreError::Drafting(_) | CoreError::Parse { .. } => StatusCode::BAD_GATEWAY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Strict JSON body parsing: malformed bodies and unknown fields are 400s.
fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
}

fn engine(state: &AppState) -> ApiResult<&Engine> {
    state
        .engine
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "index not loaded"))
}

fn keyframe(engine: &Engine, id: usize) -> ApiResult<&KeyframeRecord> {
    engine
        .manifest()
        .get(id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown keyframe {id}")))
}

fn image_url(id: usize) -> String {
    format!("/api/keyframes/{id}/image")
}

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let keyframes = state.engine.as_ref().map(|e| e.manifest().len());
    Json(json!({ "status": if keyframes.is_some() { "ok" } else { "no_index" }, "keyframes": keyframes }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AugmentRequest {
    query: String,
    #[serde(default)]
    n_drafts: Option<usize>,
}

#[derive(Debug, Serialize)]
struct AugmentResponse {
    drafts: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<String>,
}

async fn augment(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<AugmentResponse>> {
    let req: AugmentRequest = parse_body(&body)?;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("query is empty"));
    }
    let n = req.n_drafts.unwrap_or(state.defaults.n_drafts);
    if n == 0 {
        return Err(ApiError::bad_request("n_drafts must be at least 1"));
    }
    let drafter = state.drafter.clone();
    blocking(move || match drafter.generate_drafts(req.query.trim(), n) {
        Ok(drafts) => Ok(Json(AugmentResponse { drafts, warning: None })),
        Err(CoreError::Parse { message, .. }) => {
            tracing::warn!(%message, "drafting reply unparseable");
            Ok(Json(AugmentResponse { drafts: vec![], warning: Some(format!("drafting failed: {message}")) }))
        }
        Err(e) => Err(e.into()),
    })
    .await
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchBody {
    original_query: String,
    #[serde(default)]
    drafts: Vec<String>,
    #[serde(default)]
    k: Option<usize>,
    #[serde(default, rename = "K")]
    final_k: Option<usize>,
    #[serde(default)]
    ocr_filter: Option<String>,
    #[serde(default)]
    include_original: Option<bool>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchHit {
    pub keyframe_id: usize,
    pub video_id: String,
    pub frame_index: u64,
    pub score: f32,
    pub image_url: String,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
}

async fn search(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<SearchResponse>> {
    let body: SearchBody = parse_body(&body)?;
    engine(&state)?;
    let request = SearchRequest {
        original_query: body.original_query,
        drafts: body.drafts,
        k_per_draft: body.k.unwrap_or(state.defaults.k_per_draft),
        final_k: body.final_k.unwrap_or(state.defaults.final_k),
        ocr_filter: body.ocr_filter,
        include_original_as_draft: body.include_original.unwrap_or(true),
    };
    request.validate()?;
    blocking(move || {
        let engine = engine(&state)?;
        let ranked = engine.search(&request)?;
        let results = ranked
            .entries
            .iter()
            .map(|e| {
                let rec = &engine.manifest().records()[e.keyframe_id];
                SearchHit {
                    keyframe_id: e.keyframe_id,
                    video_id: rec.video_id.clone(),
                    frame_index: rec.frame_index,
                    score: e.score,
                    image_url: image_url(e.keyframe_id),
                }
            })
            .collect();
        Ok(Json(SearchResponse { results }))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct NeighborParams {
    pi: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct NeighborFrame {
    pub keyframe_id: usize,
    pub video_id: String,
    pub frame_index: u64,
    pub image_url: String,
}

async fn neighbors(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<usize>,
    Query(params): Query<NeighborParams>,
) -> ApiResult<Json<serde_json::Value>> {
    let engine = engine(&state)?;
    let pi = params.pi.unwrap_or(state.defaults.pi);
    let window = neighbor_window(id, pi, engine.manifest())?;
    let frames: Vec<NeighborFrame> = window
        .frames
        .iter()
        .map(|&f| {
            let rec = &engine.manifest().records()[f];
            NeighborFrame {
                keyframe_id: f,
                video_id: rec.video_id.clone(),
                frame_index: rec.frame_index,
                image_url: image_url(f),
            }
        })
        .collect();
    Ok(Json(json!({ "center": id, "pi": pi, "frames": frames })))
}

fn content_type(path: &str) -> &'static str {
    match Path::new(path).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("png") => "image/png",
        Some("webp") => "image/webp",
        _ => "application/octet-stream",
    }
}

async fn image(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<usize>) -> ApiResult<Response> {
    let rec = keyframe(engine(&state)?, id)?;
    let path = rec.image_path.clone();
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| ApiError::new(StatusCode::NOT_FOUND, format!("image for keyframe {id} unavailable: {e}")))?;
    Ok(([(header::CONTENT_TYPE, content_type(&path))], Body::from(bytes)).into_response())
}

async fn video_link(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<usize>) -> ApiResult<Json<serde_json::Value>> {
    let rec = keyframe(engine(&state)?, id)?;
    let meta = state
        .videos
        .get(&rec.video_id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no video link for {}", rec.video_id)))?;
    let fps = meta.fps.filter(|f| *f > 0.0).unwrap_or(state.defaults.fps);
    // Frame indices are 1-based; frame 1 starts at t = 0.
    let timestamp_seconds = (rec.frame_index.saturating_sub(1)) as f64 / fps;
    Ok(Json(json!({ "url": meta.url, "timestamp_seconds": timestamp_seconds })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitBody {
    keyframe_id: usize,
}

async fn submit(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let body: SubmitBody = parse_body(&body)?;
    let rec = keyframe(engine(&state)?, body.keyframe_id)?;
    let payload = json!({
        "keyframe_id": rec.keyframe_id,
        "video_id": rec.video_id,
        "frame_index": rec.frame_index,
    });
    match state.submit_url.clone() {
        None => {
            tracing::info!(submission = %payload, "submission logged");
            Ok(Json(json!({ "status": "logged", "submission": payload })))
        }
        Some(url) => {
            let sent = payload.clone();
            blocking(move || {
                ureq::post(&url)
                    .send_json(&sent)
                    .map(|_| ())
                    .map_err(|e| ApiError::new(StatusCode::BAD_GATEWAY, format!("submit webhook failed: {e}")))
            })
            .await?;
            Ok(Json(json!({ "status": "forwarded", "submission": payload })))
        }
    }
}

/// Binds `config.listen` and serves until interrupted.
pub async fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    let state = Arc::new(AppState::from_config(&config)?);
    let listener = tokio::net::TcpListener::bind(&config.listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "serving");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
