//! End-to-end replay: camera session → wire → server session, with
//! per-frame cost accounting.
//!
//! Durations are modelled, not measured, so loopback reports are
//! reproducible bit for bit: preprocessing from the camera's pixel-operation
//! count, transmission from the encoded request size and the link rate,
//! inference from the encoder FLOP model. Socket replays additionally record
//! the measured round trip.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::report::{build_report, FrameRecord, ReplayReport, ReportParts};
use crate::akis::AkisConfig;
use crate::error::{Error, Result};
use crate::eval::{AnnotationStore, CostRecord, DetectionsByFrame, Phase};
use crate::model::{Frame, PatchGrid};
use crate::pps::PpsConfig;
use crate::protocol::{
    decode_message, encode_message, AkisMode, CameraConfig, CameraSession, Detector, Message, PatchPayload, ProtocolError,
    ServerConfig, ServerSession,
};
use crate::rng::XorShift64Star;
use crate::vit::{flops, flops_per_block, Engine, EngineConfig};

/// Link rate of the reference testbed, Mbit/s.
pub const DEFAULT_LINK_MBPS: f64 = 93.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub link_mbps: f64,
    /// Fixed cost per request (framing, syscalls, propagation).
    pub per_message_overhead_us: f64,
    /// Camera throughput for sampling and flow.
    pub camera_ops_per_us: f64,
    /// Edge throughput for the encoder.
    pub server_flops_per_us: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self { link_mbps: DEFAULT_LINK_MBPS, per_message_overhead_us: 50.0, camera_ops_per_us: 1_000.0, server_flops_per_us: 5.0e6 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("link rate", self.link_mbps),
            ("camera throughput", self.camera_ops_per_us),
            ("server throughput", self.server_flops_per_us),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.per_message_overhead_us >= 0.0 && self.per_message_overhead_us.is_finite()) {
            return Err(Error::InvalidConfig("per-message overhead must be non-negative".into()));
        }
        Ok(())
    }

    pub fn transmit_us(&self, bytes: u64) -> f64 {
        bytes as f64 * 8.0 / self.link_mbps + self.per_message_overhead_us
    }

    /// Encoder over the transmitted tokens plus one full-length
    /// reconstruction block.
    pub fn infer_us(&self, tokens: u64, engine: &EngineConfig) -> f64 {
        let d = engine.embed_dim as u64;
        let f = flops(tokens, d, engine.depth as u64) + flops_per_block(engine.num_patches() as u64, d);
        f as f64 / self.server_flops_per_us
    }

    pub fn preprocess_us(&self, ops: u64) -> f64 {
        ops as f64 / self.camera_ops_per_us
    }
}

/// Everything that determines a replay; echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayConfig {
    pub camera: CameraConfig,
    pub engine: EngineConfig,
    pub detector: Detector,
    pub latency: LatencyModel,
    pub skip_inference: bool,
}

impl ReplayConfig {
    /// Camera settings derived from the engine's frame geometry.
    pub fn new(engine: EngineConfig, channels: usize, pps: PpsConfig, akis: AkisConfig, akis_mode: AkisMode) -> Self {
        Self {
            camera: CameraConfig {
                width: engine.frame_w,
                height: engine.frame_h,
                channels,
                patch_size: engine.patch_size,
                pps,
                akis,
                akis_mode,
                initial_interval: None,
                config_hash: engine.config_hash(),
            },
            engine,
            detector: Detector::default(),
            latency: LatencyModel::default(),
            skip_inference: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.engine.validate()?;
        self.latency.validate()?;
        let c = &self.camera;
        if (c.width, c.height, c.patch_size) != (self.engine.frame_w, self.engine.frame_h, self.engine.patch_size) {
            return Err(Error::InvalidConfig("camera geometry differs from the engine".into()));
        }
        if let Detector::Oracle(o) = self.detector {
            o.validate()?;
        }
        if self.skip_inference && matches!(self.detector, Detector::Head { .. }) {
            return Err(Error::InvalidConfig("the head detector needs inference".into()));
        }
        Ok(())
    }

    pub fn server_config(&self, annotations: Option<Arc<AnnotationStore>>) -> ServerConfig {
        ServerConfig { detector: self.detector, annotations, skip_inference: self.skip_inference }
    }

    pub fn full_frame_bytes(&self) -> u64 {
        (self.camera.width * self.camera.height * self.camera.channels) as u64
    }
}

struct Pending {
    frame_id: u64,
    phase: Phase,
    bytes: u64,
    patches: u64,
    ops: u64,
}

/// Transport-agnostic camera-side driver: produces encoded requests and
/// consumes replies, accumulating per-frame records. Both the in-process
/// loopback and the socket client run through it, so they account
/// identically.
pub struct ReplaySession {
    cfg: ReplayConfig,
    camera: CameraSession,
    grid: PatchGrid,
    frames: Vec<FrameRecord>,
    detections: DetectionsByFrame,
    pending: Option<Pending>,
}

impl ReplaySession {
    pub fn new(cfg: ReplayConfig) -> Result<Self> {
        cfg.validate()?;
        let camera = CameraSession::new(cfg.camera)?;
        Ok(Self { grid: camera.grid(), cfg, camera, frames: Vec::new(), detections: DetectionsByFrame::new(), pending: None })
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.cfg
    }

    pub fn hello(&self) -> Message {
        self.camera.hello()
    }

    pub fn accept_hello(&self, reply: &Message) -> Result<()> {
        Ok(self.camera.accept_hello(reply)?)
    }

    /// Camera step for `frame`; returns the message and its encoding.
    pub fn request(&mut self, frame: &Frame) -> Result<(Message, Vec<u8>)> {
        if self.pending.is_some() {
            return Err(Error::Protocol(ProtocolError::Internal("previous request still pending".into())));
        }
        let step = self.camera.step(frame)?;
        let bytes = encode_message(&step.message);
        let patches = step.poi.as_ref().map_or(self.grid.count(), |p| p.len()) as u64;
        self.pending =
            Some(Pending { frame_id: frame.frame_id(), phase: step.phase, bytes: bytes.len() as u64, patches, ops: step.preprocess_ops });
        Ok((step.message, bytes))
    }

    /// Records the reply to the outstanding request.
    pub fn complete(&mut self, reply: &Message, wall_round_trip_us: Option<f64>) -> Result<()> {
        let p = self.pending.take().ok_or(Error::Protocol(ProtocolError::Unexpected(reply.message_type())))?;
        self.camera.on_result(reply)?;
        let Message::Result { detections, .. } = reply else { unreachable!("on_result accepts only RESULT") };
        let lat = &self.cfg.latency;
        self.frames.push(FrameRecord {
            cost: CostRecord {
                frame_id: p.frame_id,
                phase: p.phase,
                bytes_sent: p.bytes,
                patches_sent: p.patches,
                t_preprocess_us: lat.preprocess_us(p.ops),
                t_transmit_us: lat.transmit_us(p.bytes),
                t_infer_us: lat.infer_us(p.patches, &self.cfg.engine),
            },
            poi_proportion: p.patches as f64 / self.grid.count() as f64,
            detections: detections.len() as u64,
            wall_round_trip_us,
        });
        self.detections.insert(p.frame_id, detections.clone());
        Ok(())
    }

    pub fn frames_done(&self) -> usize {
        self.frames.len()
    }

    /// Builds the report; `error` marks it incomplete.
    pub fn finish(self, mode: &str, annotations: Option<&AnnotationStore>, error: Option<String>) -> ReplayReport {
        build_report(ReportParts {
            mode,
            full_frame_bytes: self.cfg.full_frame_bytes(),
            config: self.cfg,
            frames: self.frames,
            detections: self.detections,
            annotations,
            interval_trace: self.camera.interval_trace().to_vec(),
            error,
        })
    }
}

/// Sends `msg` through the codec into `server` and decodes the reply, the
/// way a socket would.
fn loopback_round(server: &mut ServerSession, bytes: &[u8]) -> Result<Option<Message>> {
    let msg = decode_message(bytes)?;
    let reply = match server.step(&msg, bytes.len()) {
        Ok(r) => r,
        Err(e) => Some(e.to_message()),
    };
    Ok(match reply {
        Some(r) => Some(decode_message(&encode_message(&r))?),
        None => None,
    })
}

/// In-process replay. Frame-source and protocol errors stop the run and
/// yield an incomplete report; only invalid configuration is an `Err`.
pub fn replay<I>(frames: I, annotations: Option<Arc<AnnotationStore>>, cfg: &ReplayConfig, engine: Arc<Engine>) -> Result<ReplayReport>
where
    I: IntoIterator<Item = Result<Frame>>,
{
    if *engine.config() != cfg.engine {
        return Err(Error::InvalidConfig("engine differs from the replay configuration".into()));
    }
    let mut session = ReplaySession::new(cfg.clone())?;
    let mut server = ServerSession::new(engine, cfg.server_config(annotations.clone()));
    let outcome = (|| -> Result<()> {
        let reply = loopback_round(&mut server, &encode_message(&session.hello()))?;
        session.accept_hello(reply.as_ref().unwrap_or(&Message::Bye))?;
        for frame in frames {
            let frame = frame?;
            let (_, bytes) = session.request(&frame)?;
            let reply = loopback_round(&mut server, &bytes)?.ok_or(Error::Protocol(ProtocolError::Closed))?;
            session.complete(&reply, None)?;
        }
        loopback_round(&mut server, &encode_message(&Message::Bye))?;
        Ok(())
    })();
    Ok(session.finish("loopback", annotations.as_deref(), outcome.err().map(|e| e.to_string())))
}

/// Scripted transmission pattern for accounting-only replays: every
/// `interval`-th frame is a keyframe; non-keyframes carry the given patch
/// counts in turn, at random distinct positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub frames: usize,
    pub interval: u32,
    pub patch_counts: Vec<usize>,
    pub seed: u64,
}

/// Replays a [`TraceSpec`] against a server that skips inference. Pixel
/// content is zero; sizes, framing and accounting are exact.
pub fn replay_trace(trace: &TraceSpec, cfg: &ReplayConfig) -> Result<ReplayReport> {
    let mut cfg = cfg.clone();
    cfg.skip_inference = true;
    cfg.detector = Detector::default();
    cfg.camera.akis_mode = AkisMode::Fixed(trace.interval);
    cfg.validate()?;
    if trace.patch_counts.is_empty() {
        return Err(Error::InvalidConfig("trace needs at least one patch count".into()));
    }
    let grid = PatchGrid::new(cfg.camera.width, cfg.camera.height, cfg.camera.patch_size)?;
    if let Some(&c) = trace.patch_counts.iter().find(|&&c| c > grid.count()) {
        return Err(Error::InvalidConfig(format!("{c} patches requested, frame has {}", grid.count())));
    }
    let engine = Arc::new(Engine::new(cfg.engine)?);
    let mut server = ServerSession::new(engine, cfg.server_config(None));
    let mut rng = XorShift64Star::new(trace.seed);
    let c = cfg.camera.channels;
    let lat = cfg.latency;
    let mut frames = Vec::with_capacity(trace.frames);
    let mut trace_events = Vec::new();
    let mut counts = trace.patch_counts.iter().cycle();

    let mut run = || -> Result<()> {
        loopback_round(&mut server, &encode_message(&CameraSession::new(cfg.camera)?.hello()))?;
        for t in 0..trace.frames {
            let frame_id = t as u64;
            let (msg, phase, patches) = if t % trace.interval as usize == 0 {
                trace_events.push(crate::protocol::IntervalEvent { frame_id, interval: trace.interval });
                let pixels = vec![0u8; cfg.full_frame_bytes() as usize];
                let m = Message::Keyframe { frame_id, width: cfg.camera.width as u16, height: cfg.camera.height as u16, channels: c as u8, pixels };
                (m, Phase::Keyframe, grid.count())
            } else {
                let n = *counts.next().expect("non-empty cycle");
                let all: Vec<usize> = (0..grid.count()).collect();
                let mut idx = rng.sample_without_replacement(&all, n);
                idx.sort_unstable();
                let patches = idx.into_iter().map(|i| PatchPayload { index: i as u32, pixels: vec![0; grid.block_len(c)] }).collect();
                (Message::NonKeyframe { frame_id, patches }, Phase::NonKeyframe, n)
            };
            let bytes = encode_message(&msg);
            match loopback_round(&mut server, &bytes)? {
                Some(Message::Result { .. }) => {}
                Some(Message::Error { code, message }) => return Err(ProtocolError::Remote { code, message }.into()),
                other => return Err(ProtocolError::Internal(format!("unexpected reply {other:?}")).into()),
            }
            frames.push(FrameRecord {
                cost: CostRecord {
                    frame_id,
                    phase,
                    bytes_sent: bytes.len() as u64,
                    patches_sent: patches as u64,
                    t_preprocess_us: 0.0,
                    t_transmit_us: lat.transmit_us(bytes.len() as u64),
                    t_infer_us: lat.infer_us(patches as u64, &cfg.engine),
                },
                poi_proportion: patches as f64 / grid.count() as f64,
                detections: 0,
                wall_round_trip_us: None,
            });
        }
        loopback_round(&mut server, &encode_message(&Message::Bye))?;
        Ok(())
    };
    let error = run().err().map(|e| e.to_string());
    Ok(build_report(ReportParts {
        mode: "trace",
        full_frame_bytes: cfg.full_frame_bytes(),
        config: cfg.clone(),
        frames,
        detections: DetectionsByFrame::new(),
        annotations: None,
        interval_trace: trace_events,
        error,
    }))
}
