use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use arena_core::eval::AnnotationStore;
use arena_core::protocol::{Detector, ServerConfig, ServerCostRecord};
use arena_core::vit::{Engine, EngineConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineInfo {
    pub config: EngineConfig,
    pub config_hash: u64,
    pub parameters: usize,
    pub num_patches: usize,
    pub detector: Detector,
    pub annotated_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: u64,
    pub peer: String,
    pub open: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub frames: usize,
    pub bytes_received: u64,
    pub cost_log: Vec<ServerCostRecord>,
}

/// Shared, cheaply clonable server state. The engine is read-only; each
/// connection owns its own session and publishes its log here.
#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    config: ServerConfig,
    sessions: Arc<Mutex<BTreeMap<u64, SessionSummary>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(engine: Engine, detector: Detector, annotations: Option<AnnotationStore>) -> Self {
        Self {
            engine: Arc::new(engine),
            config: ServerConfig { detector, annotations: annotations.map(Arc::new), skip_inference: false },
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
        }
    }

    /// Runs without the backbone forward pass; accounting and the oracle
    /// still work.
    pub fn skip_inference(mut self, skip: bool) -> Self {
        self.config.skip_inference = skip;
        self
    }

    pub fn engine(&self) -> &Arc<Engine> {
        &self.engine
    }

    pub fn server_config(&self) -> &ServerConfig {
        &self.config
    }

    pub fn info(&self) -> EngineInfo {
        let c = *self.engine.config();
        EngineInfo {
            config: c,
            config_hash: c.config_hash(),
            parameters: self.engine.param_count(),
            num_patches: c.num_patches(),
            detector: self.config.detector,
            annotated_frames: self.config.annotations.as_ref().map_or(0, |a| a.frame_ids().count()),
        }
    }

    pub(crate) fn open_session(&self, peer: String) -> u64 {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let s = SessionSummary { id, peer, open: true, error: None, frames: 0, bytes_received: 0, cost_log: Vec::new() };
        self.sessions.lock().expect("session registry poisoned").insert(id, s);
        id
    }

    pub(crate) fn update_session(&self, id: u64, log: &[ServerCostRecord], open: bool, error: Option<String>) {
        let mut map = self.sessions.lock().expect("session registry poisoned");
        if let Some(s) = map.get_mut(&id) {
            s.frames = log.len();
            s.bytes_received = log.iter().map(|r| r.bytes_received).sum();
            s.cost_log = log.to_vec();
            s.open = open;
            if error.is_some() {
                s.error = error;
            }
        }
    }

    pub fn sessions(&self) -> Vec<SessionSummary> {
        self.sessions.lock().expect("session registry poisoned").values().map(|s| SessionSummary { cost_log: Vec::new(), ..s.clone() }).collect()
    }

    pub fn session(&self, id: u64) -> Option<SessionSummary> {
        self.sessions.lock().expect("session registry poisoned").get(&id).cloned()
    }
}
