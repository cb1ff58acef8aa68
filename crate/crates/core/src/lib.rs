//! Patch-of-interest inference acceleration for edge-assisted video analytics.
//!
//! The camera side decides which fixed-size patches of each frame are worth
//! sending ([`pps`]) and how often to send a full keyframe ([`akis`]). The
//! edge side runs a small vision transformer that only encodes the patches it
//! receives and splices the rest from cached token pools ([`vit`]). The two
//! talk over a length-prefixed binary protocol ([`protocol`]); [`harness`]
//! replays annotated frame sequences end to end and reports bandwidth,
//! latency and detection accuracy ([`eval`]).

pub mod akis;
pub mod error;
pub mod eval;
pub mod grid;
pub mod harness;
pub mod model;
pub mod pps;
pub mod protocol;
pub mod rng;
pub mod vit;

pub use error::{Error, Result};
pub use model::{iou, to_grayscale, BBox, Detection, Frame, GreyFrame, PatchGrid, PoiSet};
