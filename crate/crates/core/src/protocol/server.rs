use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::codec::{Hello, Message, PatchPayload};
use super::ProtocolError;
use crate::eval::{head_detections, head_predict, oracle_detect, AnnotationStore, OracleConfig, Phase};
use crate::model::{Detection, Frame, PatchGrid, PoiSet};
use crate::rng::XorShift64Star;
use crate::vit::{flops, flops_per_block, Engine, Inference, MemoryTokenPools, ENGINE_CHANNELS};

/// Where detections come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Detector {
    /// Degraded ground truth from the annotation store.
    Oracle(OracleConfig),
    /// Untrained objectness head over the pyramid; for shape probes only.
    Head { threshold: f32 },
}

impl Default for Detector {
    fn default() -> Self {
        Detector::Oracle(OracleConfig::default())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    pub detector: Detector,
    pub annotations: Option<Arc<AnnotationStore>>,
    /// Skip the backbone forward pass (accounting-only runs on large
    /// frames). The head detector needs it.
    pub skip_inference: bool,
}

/// Per-message accounting on the edge side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServerCostRecord {
    pub frame_id: u64,
    pub phase: Phase,
    pub bytes_received: u64,
    pub patches: u64,
    pub tokens_encoded: u64,
    /// Query-key entries scored across all encoder layers (0 when skipped).
    pub attention_entries: u64,
    /// Modelled encoder + reconstruction FLOPs for this frame.
    pub flops: u64,
    pub detections: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    AwaitHello,
    AwaitKeyframe,
    Streaming,
    Closed,
}

/// Edge-side session: pools, detector state and the cost log. Enforces
/// `HELLO (KEYFRAME NONKEYFRAME*)* BYE`; any violation resets the session
/// and the transport is expected to close the connection.
#[derive(Debug)]
pub struct ServerSession {
    engine: Arc<Engine>,
    cfg: ServerConfig,
    grid: PatchGrid,
    state: SessionState,
    channels: usize,
    pools: MemoryTokenPools,
    rng: XorShift64Star,
    log: Vec<ServerCostRecord>,
    last: Option<Inference>,
}

impl ServerSession {
    pub fn new(engine: Arc<Engine>, cfg: ServerConfig) -> Self {
        let seed = match cfg.detector {
            Detector::Oracle(o) => o.rng_seed,
            Detector::Head { .. } => 0,
        };
        Self {
            grid: engine.config().grid(),
            engine,
            cfg,
            state: SessionState::AwaitHello,
            channels: 0,
            pools: MemoryTokenPools::new(),
            rng: XorShift64Star::new(seed),
            log: Vec::new(),
            last: None,
        }
    }

    pub fn state(&self) -> SessionState {
        self.state
    }
    pub fn cost_log(&self) -> &[ServerCostRecord] {
        &self.log
    }
    pub fn pools(&self) -> &MemoryTokenPools {
        &self.pools
    }
    /// Inference output of the most recent frame, if the backbone ran.
    pub fn last_inference(&self) -> Option<&Inference> {
        self.last.as_ref()
    }

    /// The handshake this server answers with.
    pub fn server_hello(&self) -> Hello {
        let c = self.engine.config();
        Hello {
            width: c.frame_w as u16,
            height: c.frame_h as u16,
            channels: self.channels as u8,
            patch_size: c.patch_size as u16,
            config_hash: c.config_hash(),
        }
    }

    fn reset(&mut self) {
        self.state = SessionState::AwaitHello;
        self.pools.reset();
        self.last = None;
    }

    /// Handles one message. `Ok(None)` means no reply (BYE). On error the
    /// session is reset; send [`ProtocolError::to_message`] and hang up.
    pub fn step(&mut self, msg: &Message, wire_len: usize) -> Result<Option<Message>, ProtocolError> {
        let out = self.step_inner(msg, wire_len);
        if out.is_err() {
            self.reset();
        }
        out
    }

    fn step_inner(&mut self, msg: &Message, wire_len: usize) -> Result<Option<Message>, ProtocolError> {
        match (self.state, msg) {
            (SessionState::Closed, _) => Err(ProtocolError::Closed),
            (SessionState::AwaitHello, Message::Hello(h)) => {
                self.check_hello(h)?;
                self.channels = h.channels as usize;
                self.state = SessionState::AwaitKeyframe;
                Ok(Some(Message::Hello(self.server_hello())))
            }
            (SessionState::AwaitHello, _) => Err(ProtocolError::HelloRequired),
            (_, Message::Hello(_)) => Err(ProtocolError::DuplicateHello),
            (_, Message::Bye) => {
                self.state = SessionState::Closed;
                self.pools.reset();
                Ok(None)
            }
            (_, Message::Keyframe { frame_id, width, height, channels, pixels }) => {
                if (*width as usize, *height as usize, *channels as usize) != (self.grid.cols * self.grid.patch_size, self.grid.rows * self.grid.patch_size, self.channels) {
                    return Err(ProtocolError::SessionMismatch(format!("KEYFRAME {width}x{height}x{channels} differs from the session")));
                }
                let frame = Frame::new(*frame_id, *width as usize, *height as usize, *channels as usize, pixels.clone())
                    .map_err(|e| ProtocolError::BadPayload(e.to_string()))?;
                let inference = if self.cfg.skip_inference {
                    None
                } else {
                    Some(self.engine.keyframe_infer(&frame, &mut self.pools).map_err(|e| ProtocolError::Internal(e.to_string()))?)
                };
                self.state = SessionState::Streaming;
                Ok(Some(self.finish(*frame_id, Phase::Keyframe, wire_len, self.grid.count(), inference)?))
            }
            (SessionState::AwaitKeyframe, Message::NonKeyframe { .. }) => Err(ProtocolError::NonKeyframeBeforeKeyframe),
            (_, Message::NonKeyframe { frame_id, patches }) => {
                let poi = self.check_patches(patches)?;
                let inference = if self.cfg.skip_inference {
                    None
                } else {
                    let blocks: Vec<&[u8]> = patches.iter().map(|p| p.pixels.as_slice()).collect();
                    // PoiSet is sorted; the camera sends in index order, which check_patches enforces
                    Some(self.engine.nonkeyframe_infer(&blocks, &poi, &mut self.pools).map_err(|e| ProtocolError::Internal(e.to_string()))?)
                };
                Ok(Some(self.finish(*frame_id, Phase::NonKeyframe, wire_len, poi.len(), inference)?))
            }
            (_, m @ (Message::Result { .. } | Message::Error { .. })) => Err(ProtocolError::Unexpected(m.message_type())),
        }
    }

    fn check_hello(&self, h: &Hello) -> Result<(), ProtocolError> {
        let c = self.engine.config();
        if (h.width as usize, h.height as usize, h.patch_size as usize) != (c.frame_w, c.frame_h, c.patch_size) {
            return Err(ProtocolError::SessionMismatch(format!(
                "camera sends {}x{} / P={}, engine expects {}x{} / P={}",
                h.width, h.height, h.patch_size, c.frame_w, c.frame_h, c.patch_size
            )));
        }
        if h.channels != 1 && h.channels as usize != ENGINE_CHANNELS {
            return Err(ProtocolError::SessionMismatch(format!("{} channels not supported", h.channels)));
        }
        if h.config_hash != 0 && h.config_hash != c.config_hash() {
            return Err(ProtocolError::SessionMismatch(format!("engine config hash {:#018x} != {:#018x}", h.config_hash, c.config_hash())));
        }
        Ok(())
    }

    fn check_patches(&self, patches: &[PatchPayload]) -> Result<PoiSet, ProtocolError> {
        let block = self.grid.block_len(self.channels);
        let mut prev: Option<u32> = None;
        for p in patches {
            if p.pixels.len() != block {
                return Err(ProtocolError::BadPayload(format!("patch of {} bytes, expected {block}", p.pixels.len())));
            }
            if prev.is_some_and(|q| q >= p.index) {
                return Err(ProtocolError::BadPayload("patch indices must be strictly increasing".into()));
            }
            prev = Some(p.index);
        }
        PoiSet::new(self.grid, patches.iter().map(|p| p.index as usize).collect()).map_err(|e| ProtocolError::BadPayload(e.to_string()))
    }

    fn finish(&mut self, frame_id: u64, phase: Phase, wire_len: usize, tokens: usize, inference: Option<Inference>) -> Result<Message, ProtocolError> {
        let detections: Vec<Detection> = match (self.cfg.detector, &inference) {
            (Detector::Oracle(o), _) => match &self.cfg.annotations {
                Some(store) => oracle_detect(frame_id, store, &o, &mut self.rng),
                None => Vec::new(),
            },
            (Detector::Head { threshold }, Some(inf)) => {
                head_detections(&head_predict(&inf.pyramid, &self.engine), self.grid.patch_size, threshold)
            }
            (Detector::Head { .. }, None) => {
                return Err(ProtocolError::Internal("head detector needs the backbone to run".into()));
            }
        };
        let c = self.engine.config();
        let model = flops(tokens as u64, c.embed_dim as u64, c.depth as u64) + flops_per_block(self.grid.count() as u64, c.embed_dim as u64);
        let patches = match phase {
            Phase::Keyframe => 0,
            Phase::NonKeyframe => tokens as u64,
        };
        self.log.push(ServerCostRecord {
            frame_id,
            phase,
            bytes_received: wire_len as u64,
            patches,
            tokens_encoded: tokens as u64,
            attention_entries: inference.as_ref().map_or(0, |i| i.encoder_attention_entries.iter().sum()),
            flops: u64::try_from(model).unwrap_or(u64::MAX),
            detections: detections.len() as u64,
        });
        self.last = inference;
        Ok(Message::Result { frame_id, detections })
    }
}

