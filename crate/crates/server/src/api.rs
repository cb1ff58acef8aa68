use std::sync::Arc;

use arena_core::akis::AkisConfig;
use arena_core::eval::{bandwidth_report, map_at_50, recall_at_50, AnnotationStore, BandwidthSummary, CostRecord, DetectionsByFrame};
use arena_core::harness::{replay, replay_trace, synth_sequence, LatencyModel, ReplayConfig, ReplayReport, SynthSpec, TraceSpec};
use arena_core::pps::PpsConfig;
use arena_core::protocol::{AkisMode, Detector};
use arena_core::vit::{flops, flops_per_block, Engine, EngineConfig};
use arena_core::{iou, BBox};
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::ApiError;
use crate::state::{AppState, EngineInfo, SessionSummary};

/// Upper bound on frames in one synchronous replay request.
const MAX_REPLAY_FRAMES: usize = 5_000;
const MAX_FRAME_PIXELS: usize = 4096 * 4096;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/v1/engine", get(engine_info))
        .route("/v1/flops", post(flops_handler))
        .route("/v1/iou", post(iou_handler))
        .route("/v1/map", post(map_handler))
        .route("/v1/bandwidth", post(bandwidth_handler))
        .route("/v1/replay", post(replay_handler))
        .route("/v1/replay/trace", post(trace_handler))
        .route("/v1/sessions", get(list_sessions))
        .route("/v1/sessions/{id}", get(get_session))
        .with_state(state)
}

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn engine_info(State(state): State<AppState>) -> Json<EngineInfo> {
    Json(state.info())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlopsRequest {
    /// Tokens through the encoder (N').
    pub tokens: u64,
    /// Reference length (N) for the reduction figure.
    pub full_tokens: Option<u64>,
    pub embed_dim: Option<u64>,
    pub depth: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopsResponse {
    pub per_block: u128,
    pub total: u128,
    /// `1 - flops(N') / flops(N)` when `full_tokens` is given.
    pub reduction: Option<f64>,
}

async fn flops_handler(State(state): State<AppState>, Json(req): Json<FlopsRequest>) -> Result<Json<FlopsResponse>, ApiError> {
    let c = state.engine().config();
    let d = req.embed_dim.unwrap_or(c.embed_dim as u64);
    let l = req.depth.unwrap_or(c.depth as u64);
    if d == 0 || d > 1 << 20 || req.tokens > 1 << 32 {
        return Err(ApiError::BadRequest("embed_dim must be in 1..=2^20 and tokens at most 2^32".into()));
    }
    let reduction = match req.full_tokens {
        Some(0) => return Err(ApiError::BadRequest("full_tokens must be positive".into())),
        Some(n) if n > 1 << 32 => return Err(ApiError::BadRequest("full_tokens at most 2^32".into())),
        Some(n) => Some(1.0 - flops(req.tokens, d, 1) as f64 / flops(n, d, 1) as f64),
        None => None,
    };
    Ok(Json(FlopsResponse { per_block: flops_per_block(req.tokens, d), total: flops(req.tokens, d, l), reduction }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IouRequest {
    pub a: BBox,
    pub b: BBox,
}

async fn iou_handler(Json(req): Json<IouRequest>) -> Result<Json<Value>, ApiError> {
    if !req.a.is_valid() || !req.b.is_valid() {
        return Err(ApiError::BadRequest("boxes need x1 <= x2, y1 <= y2 and finite coordinates".into()));
    }
    Ok(Json(json!({ "iou": iou(&req.a, &req.b) })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MapRequest {
    pub detections: DetectionsByFrame,
    pub annotations: AnnotationStore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapResponse {
    pub map_at_50: f64,
    pub recall_at_50: f64,
}

async fn map_handler(Json(req): Json<MapRequest>) -> Json<MapResponse> {
    Json(MapResponse { map_at_50: map_at_50(&req.detections, &req.annotations), recall_at_50: recall_at_50(&req.detections, &req.annotations) })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BandwidthRequest {
    records: Vec<CostRecord>,
    full_frame_bytes: u64,
}

async fn bandwidth_handler(Json(req): Json<BandwidthRequest>) -> Result<Json<BandwidthSummary>, ApiError> {
    Ok(Json(bandwidth_report(&req.records, req.full_frame_bytes)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayRequest {
    pub spec: SynthSpec,
    /// Defaults to the server's engine resized to the sequence's frame size.
    pub engine: Option<EngineConfig>,
    #[serde(default)]
    pub pps: PpsConfig,
    #[serde(default)]
    pub akis: AkisConfig,
    #[serde(default = "adaptive")]
    pub akis_mode: AkisMode,
    pub detector: Option<Detector>,
    pub latency: Option<LatencyModel>,
    #[serde(default)]
    pub skip_inference: bool,
}

fn adaptive() -> AkisMode {
    AkisMode::Adaptive
}

fn engine_for(state: &AppState, cfg: EngineConfig) -> Result<Arc<Engine>, ApiError> {
    if cfg == *state.engine().config() {
        return Ok(Arc::clone(state.engine()));
    }
    if cfg.frame_w * cfg.frame_h > MAX_FRAME_PIXELS {
        return Err(ApiError::BadRequest("frame too large".into()));
    }
    Ok(Arc::new(Engine::new(cfg)?))
}

async fn replay_handler(State(state): State<AppState>, Json(req): Json<ReplayRequest>) -> Result<Json<ReplayReport>, ApiError> {
    req.spec.validate()?;
    if req.spec.frames > MAX_REPLAY_FRAMES || req.spec.width * req.spec.height > MAX_FRAME_PIXELS {
        return Err(ApiError::BadRequest(format!("at most {MAX_REPLAY_FRAMES} frames of at most {MAX_FRAME_PIXELS} pixels")));
    }
    let ecfg = req.engine.unwrap_or_else(|| state.engine().config().with_frame(req.spec.width, req.spec.height));
    let mut cfg = ReplayConfig::new(ecfg, req.spec.channels, req.pps, req.akis, req.akis_mode);
    if let Some(d) = req.detector {
        cfg.detector = d;
    }
    if let Some(l) = req.latency {
        cfg.latency = l;
    }
    cfg.skip_inference = req.skip_inference;
    cfg.validate()?;
    let engine = engine_for(&state, ecfg)?;
    let report = tokio::task::spawn_blocking(move || {
        let (frames, gt) = synth_sequence(&req.spec)?;
        replay(frames.into_iter().map(Ok), Some(Arc::new(gt)), &cfg, engine)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRequest {
    pub trace: TraceSpec,
    pub engine: Option<EngineConfig>,
    #[serde(default = "three")]
    pub channels: usize,
    pub latency: Option<LatencyModel>,
}

fn three() -> usize {
    3
}

async fn trace_handler(State(state): State<AppState>, Json(req): Json<TraceRequest>) -> Result<Json<ReplayReport>, ApiError> {
    let ecfg = req.engine.unwrap_or(*state.engine().config());
    if req.trace.frames > MAX_REPLAY_FRAMES || ecfg.frame_w * ecfg.frame_h > MAX_FRAME_PIXELS {
        return Err(ApiError::BadRequest("trace too large".into()));
    }
    let mut cfg = ReplayConfig::new(ecfg, req.channels, PpsConfig::default(), AkisConfig::default(), AkisMode::Fixed(req.trace.interval.max(1)));
    if let Some(l) = req.latency {
        cfg.latency = l;
    }
    let report = tokio::task::spawn_blocking(move || replay_trace(&req.trace, &cfg)).await.map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(Json(report))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<SessionSummary>> {
    Json(state.sessions())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Json<SessionSummary>, ApiError> {
    state.session(id).map(Json).ok_or_else(|| ApiError::NotFound(format!("session {id}")))
}
