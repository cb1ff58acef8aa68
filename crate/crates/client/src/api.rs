use arena_core::eval::{AnnotationStore, DetectionsByFrame};
use arena_core::harness::ReplayReport;
use arena_core::BBox;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, thiserror::Error)]
pub enum ApiClientError {
    #[error("http: {0}")]
    Http(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Status { status: u16, message: String },
}

/// Thin typed wrapper over the server's JSON endpoints. Request bodies are
/// passed through as JSON values where the server accepts optional fields.
#[derive(Debug, Clone)]
pub struct ApiClient {
    base: String,
    http: reqwest::Client,
}

impl ApiClient {
    pub fn new(base: impl Into<String>) -> Self {
        Self { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T, ApiClientError> {
        let status = resp.status();
        if !status.is_success() {
            let body: Value = resp.json().await.unwrap_or(Value::Null);
            let message = body.get("error").and_then(Value::as_str).unwrap_or("no error message").to_string();
            return Err(ApiClientError::Status { status: status.as_u16(), message });
        }
        Ok(resp.json().await?)
    }

    pub async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ApiClientError> {
        Self::decode(self.http.get(format!("{}{path}", self.base)).send().await?).await
    }

    pub async fn post<B: Serialize + ?Sized, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, ApiClientError> {
        Self::decode(self.http.post(format!("{}{path}", self.base)).json(body).send().await?).await
    }

    pub async fn health(&self) -> Result<bool, ApiClientError> {
        let v: Value = self.get("/health").await?;
        Ok(v.get("status").and_then(Value::as_str) == Some("ok"))
    }

    pub async fn engine(&self) -> Result<Value, ApiClientError> {
        self.get("/v1/engine").await
    }

    pub async fn iou(&self, a: BBox, b: BBox) -> Result<f64, ApiClientError> {
        let v: Value = self.post("/v1/iou", &json!({ "a": a, "b": b })).await?;
        Ok(v["iou"].as_f64().unwrap_or(f64::NAN))
    }

    pub async fn flops(&self, tokens: u64, full_tokens: Option<u64>) -> Result<Value, ApiClientError> {
        self.post("/v1/flops", &json!({ "tokens": tokens, "full_tokens": full_tokens })).await
    }

    pub async fn map(&self, detections: &DetectionsByFrame, annotations: &AnnotationStore) -> Result<Value, ApiClientError> {
        self.post("/v1/map", &json!({ "detections": detections, "annotations": annotations })).await
    }

    /// Server-side synthetic replay; `request` follows the `/v1/replay` schema.
    pub async fn replay(&self, request: &Value) -> Result<ReplayReport, ApiClientError> {
        self.post("/v1/replay", request).await
    }

    pub async fn sessions(&self) -> Result<Value, ApiClientError> {
        self.get("/v1/sessions").await
    }

    pub async fn session(&self, id: u64) -> Result<Value, ApiClientError> {
        self.get(&format!("/v1/sessions/{id}")).await
    }
}
