use serde::{Deserialize, Serialize};

use super::codec::{Hello, Message, PatchPayload};
use super::ProtocolError;
use crate::akis::{estimate_flow, next_interval, AkisConfig};
use crate::error::{Error, Result};
use crate::eval::Phase;
use crate::grid::extract_patches;
use crate::model::{to_grayscale, BBox, Frame, PatchGrid, PoiSet};
use crate::pps::{sample_pois, PpsConfig};
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "interval")]
pub enum AkisMode {
    Adaptive,
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub patch_size: usize,
    pub pps: PpsConfig,
    pub akis: AkisConfig,
    pub akis_mode: AkisMode,
    /// Starting interval in adaptive mode; `k_lower` when absent.
    pub initial_interval: Option<u32>,
    pub config_hash: u64,
}

impl CameraConfig {
    pub fn validate(&self) -> Result<()> {
        PatchGrid::new(self.width, self.height, self.patch_size)?;
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidConfig(format!("channels {}", self.channels)));
        }
        if self.width > u16::MAX as usize || self.height > u16::MAX as usize || self.patch_size > u16::MAX as usize {
            return Err(Error::InvalidConfig("frame and patch sizes must fit in 16 bits".into()));
        }
        self.pps.validate()?;
        self.akis.validate()?;
        match self.akis_mode {
            AkisMode::Fixed(0) => return Err(Error::InvalidConfig("fixed interval must be at least 1".into())),
            AkisMode::Fixed(_) => {}
            AkisMode::Adaptive => {
                let bs = self.akis.block_size;
                if self.width % bs != 0 || self.height % bs != 0 {
                    return Err(Error::InvalidConfig(format!("frame {}x{} not divisible into {bs}px flow blocks", self.width, self.height)));
                }
                if let Some(k) = self.initial_interval {
                    if k < self.akis.k_lower || k > self.akis.k_upper {
                        return Err(Error::InvalidConfig(format!("initial interval {k} outside AKIS bounds")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Interval length in force from `frame_id` (a keyframe) onward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalEvent {
    pub frame_id: u64,
    pub interval: u32,
}

/// What the camera emitted for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraStep {
    pub message: Message,
    pub phase: Phase,
    pub poi: Option<PoiSet>,
    /// Pixel operations spent on sampling and flow (input to the latency model).
    pub preprocess_ops: u64,
}

/// Camera-side state: interval counter, previous frame and detections, and
/// the keyframe kept for the interval-switching decision.
#[derive(Debug, Clone)]
pub struct CameraSession {
    cfg: CameraConfig,
    grid: PatchGrid,
    interval: u32,
    counter: u32,
    prev_frame: Option<Frame>,
    prev_boxes: Option<Vec<BBox>>,
    keyframe: Option<Frame>,
    key_boxes: Option<Vec<BBox>>,
    pending: Option<(u64, Phase)>,
    rng: XorShift64Star,
    trace: Vec<IntervalEvent>,
}

impl CameraSession {
    pub fn new(cfg: CameraConfig) -> Result<Self> {
        cfg.validate()?;
        let interval = match cfg.akis_mode {
            AkisMode::Fixed(k) => k,
            AkisMode::Adaptive => cfg.initial_interval.unwrap_or(cfg.akis.k_lower),
        };
        Ok(Self {
            grid: PatchGrid::new(cfg.width, cfg.height, cfg.patch_size)?,
            rng: XorShift64Star::new(cfg.pps.rng_seed),
            cfg,
            interval,
            counter: 0,
            prev_frame: None,
            prev_boxes: None,
            keyframe: None,
            key_boxes: None,
            pending: None,
            trace: Vec::new(),
        })
    }

    pub fn config(&self) -> &CameraConfig {
        &self.cfg
    }
    pub fn interval(&self) -> u32 {
        self.interval
    }
    pub fn interval_trace(&self) -> &[IntervalEvent] {
        &self.trace
    }
    pub fn grid(&self) -> PatchGrid {
        self.grid
    }

    pub fn hello(&self) -> Message {
        Message::Hello(Hello {
            width: self.cfg.width as u16,
            height: self.cfg.height as u16,
            channels: self.cfg.channels as u8,
            patch_size: self.cfg.patch_size as u16,
            config_hash: self.cfg.config_hash,
        })
    }

    /// Checks the server's handshake reply.
    pub fn accept_hello(&self, reply: &Message) -> std::result::Result<(), ProtocolError> {
        match reply {
            Message::Hello(h) => {
                let ours = match self.hello() {
                    Message::Hello(o) => o,
                    _ => unreachable!(),
                };
                if (h.width, h.height, h.patch_size) != (ours.width, ours.height, ours.patch_size) {
                    return Err(ProtocolError::SessionMismatch(format!(
                        "server runs {}x{} / P={}, camera sends {}x{} / P={}",
                        h.width, h.height, h.patch_size, ours.width, ours.height, ours.patch_size
                    )));
                }
                Ok(())
            }
            Message::Error { code, message } => Err(ProtocolError::Remote { code: *code, message: message.clone() }),
            other => Err(ProtocolError::Unexpected(other.message_type())),
        }
    }

    fn adaptive_range(&self) -> bool {
        matches!(self.cfg.akis_mode, AkisMode::Adaptive) && self.cfg.akis.k_lower < self.cfg.akis.k_upper
    }

    /// Closes the finished interval, updating its length from the motion
    /// between its keyframe and its last frame. A one-frame interval has no
    /// later frame of its own, so it is compared against `incoming`.
    fn close_interval(&mut self, incoming: &Frame) -> Result<u64> {
        let mut ops = 0;
        if self.adaptive_range() {
            if let (Some(key), Some(boxes), Some(last)) = (&self.keyframe, &self.key_boxes, &self.prev_frame) {
                let other = if self.interval == 1 { incoming } else { last };
                let flow = estimate_flow(&to_grayscale(key), &to_grayscale(other), &self.cfg.akis)?;
                let side = (2 * self.cfg.akis.search_radius + 1) as u64;
                ops += 2 * (self.cfg.width * self.cfg.height) as u64 * (1 + side * side);
                self.interval = next_interval(&flow, boxes, self.interval, &self.cfg.akis);
            }
        }
        self.counter = 0;
        Ok(ops)
    }

    /// Decides what to send for `frame`.
    pub fn step(&mut self, frame: &Frame) -> Result<CameraStep> {
        if (frame.width(), frame.height(), frame.channels()) != (self.cfg.width, self.cfg.height, self.cfg.channels) {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{}x{} vs session {}x{}x{}",
                frame.width(),
                frame.height(),
                frame.channels(),
                self.cfg.width,
                self.cfg.height,
                self.cfg.channels
            )));
        }
        let mut ops = 0;
        if self.counter >= self.interval {
            ops += self.close_interval(frame)?;
        }
        // the server never answered the previous frame: restart the interval
        if self.counter > 0 && self.prev_boxes.is_none() {
            self.counter = 0;
        }
        let step = if self.counter == 0 {
            self.keyframe = Some(frame.clone());
            self.key_boxes = None;
            self.trace.push(IntervalEvent { frame_id: frame.frame_id(), interval: self.interval });
            CameraStep {
                message: Message::Keyframe {
                    frame_id: frame.frame_id(),
                    width: frame.width() as u16,
                    height: frame.height() as u16,
                    channels: frame.channels() as u8,
                    pixels: frame.pixels().to_vec(),
                },
                phase: Phase::Keyframe,
                poi: None,
                preprocess_ops: ops,
            }
        } else {
            let prev = self.prev_frame.as_ref().expect("non-keyframe follows a frame");
            let boxes = self.prev_boxes.as_deref().unwrap_or(&[]);
            let poi = sample_pois(prev, frame, boxes, &self.grid, &self.cfg.pps, &mut self.rng)?;
            // greyscale both frames, difference, then copy the patches out
            ops += (frame.width() * frame.height()) as u64 * 3 + (poi.len() * self.grid.block_len(frame.channels())) as u64;
            let patches = extract_patches(frame, &poi)?
                .into_iter()
                .zip(poi.indices())
                .map(|(pixels, &i)| PatchPayload { index: i as u32, pixels })
                .collect();
            CameraStep {
                message: Message::NonKeyframe { frame_id: frame.frame_id(), patches },
                phase: Phase::NonKeyframe,
                poi: Some(poi),
                preprocess_ops: ops,
            }
        };
        self.prev_frame = Some(frame.clone());
        self.prev_boxes = None;
        self.pending = Some((frame.frame_id(), step.phase));
        self.counter += 1;
        Ok(step)
    }

    /// Feeds back the server's reply for the last frame sent.
    pub fn on_result(&mut self, reply: &Message) -> std::result::Result<(), ProtocolError> {
        match reply {
            Message::Result { frame_id, detections } => {
                let Some((expected, phase)) = self.pending else {
                    return Err(ProtocolError::Unexpected(reply.message_type()));
                };
                if *frame_id != expected {
                    return Err(ProtocolError::BadPayload(format!("RESULT for frame {frame_id}, expected {expected}")));
                }
                let boxes: Vec<BBox> = detections.iter().map(|d| d.bbox).collect();
                if phase == Phase::Keyframe {
                    self.key_boxes = Some(boxes.clone());
                }
                self.prev_boxes = Some(boxes);
                self.pending = None;
                Ok(())
            }
            Message::Error { code, message } => {
                self.pending = None;
                Err(ProtocolError::Remote { code: *code, message: message.clone() })
            }
            other => Err(ProtocolError::Unexpected(other.message_type())),
        }
    }

    /// Drops the outstanding request (e.g. after a timeout); the next
    /// frame becomes a keyframe.
    pub fn abandon_pending(&mut self) {
        self.pending = None;
        self.prev_boxes = None;
    }
}
