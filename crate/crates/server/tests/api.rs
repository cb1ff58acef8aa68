use arena_core::protocol::Detector;
use arena_core::vit::{Engine, EngineConfig};
use arena_server::{router, AppState};
use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> axum::Router {
    let engine = Engine::new(EngineConfig { embed_dim: 16, depth: 2, heads: 2, ..EngineConfig::default() }).unwrap();
    router(AppState::new(engine, Detector::default(), None))
}

async fn call(method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(path).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), 1 << 24).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn health_and_engine() {
    assert_eq!(call("GET", "/health", None).await.1, json!({ "status": "ok" }));
    let (s, v) = call("GET", "/v1/engine", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["num_patches"], 16);
    assert_eq!(v["config"]["embed_dim"], 16);
}

#[tokio::test]
async fn flops_reduction() {
    let (s, v) = call("POST", "/v1/flops", Some(json!({ "tokens": 2025, "full_tokens": 8100, "embed_dim": 384, "depth": 1 }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["total"], 6_732_460_800u64);
    assert!((v["reduction"].as_f64().unwrap() - 0.896).abs() < 1e-3);
    let (s, _) = call("POST", "/v1/flops", Some(json!({ "tokens": 1, "full_tokens": 0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn iou_and_validation() {
    let b = |x1: f32, y1: f32, x2: f32, y2: f32| json!({ "x1": x1, "y1": y1, "x2": x2, "y2": y2 });
    let (_, v) = call("POST", "/v1/iou", Some(json!({ "a": b(0., 0., 10., 10.), "b": b(5., 0., 15., 10.) }))).await;
    assert!((v["iou"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    let (s, v) = call("POST", "/v1/iou", Some(json!({ "a": b(10., 0., 0., 10.), "b": b(0., 0., 1., 1.) }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["error"].is_string());
    let (s, _) = call("POST", "/v1/iou", Some(json!({ "a": 1 }))).await;
    assert!(s.is_client_error());
}

#[tokio::test]
async fn map_endpoint() {
    let bx = json!({ "x1": 0.0, "y1": 0.0, "x2": 10.0, "y2": 10.0 });
    let body = json!({
        "detections": { "1": [ { "bbox": bx, "score": 0.9, "class_id": 1 } ] },
        "annotations": { "frames": { "1": [ { "bbox": bx, "class_id": 1 } ] } }
    });
    let (s, v) = call("POST", "/v1/map", Some(body)).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v, json!({ "map_at_50": 1.0, "recall_at_50": 1.0 }));
}

#[tokio::test]
async fn synthetic_replay_endpoint() {
    let spec = json!({
        "width": 64, "height": 64, "channels": 3, "frames": 8, "seed": 1,
        "objects": [ { "x": 4, "y": 4, "w": 16, "h": 16, "vx": 1, "vy": 0 } ]
    });
    let (s, v) = call("POST", "/v1/replay", Some(json!({ "spec": spec, "pps": { "sampling_rate": 1.0, "diff_threshold": 200, "margin": 1, "rng_seed": 0 } }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["schema"], "arena.replay-report/v1");
    assert_eq!(v["complete"], true);
    assert_eq!(v["frames"].as_array().unwrap().len(), 8);
    assert_eq!(v["accuracy"]["recall_at_50"], 1.0);
}

#[tokio::test]
async fn trace_endpoint_and_limits() {
    let (s, v) = call("POST", "/v1/replay/trace", Some(json!({ "trace": { "frames": 10, "interval": 5, "patch_counts": [4], "seed": 0 } }))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["bandwidth"]["keyframe"]["frames"], 2);
    let (s, _) = call("POST", "/v1/replay/trace", Some(json!({ "trace": { "frames": 10_000_000, "interval": 5, "patch_counts": [4], "seed": 0 } }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let (s, v) = call("GET", "/v1/sessions/77", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "session 77 not found");
    assert_eq!(call("GET", "/v1/sessions", None).await.1, json!([]));
}
