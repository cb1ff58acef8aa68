//! Data plumbing and end-to-end replay.

pub mod mot;
pub mod pnm;
mod replay;
mod report;
pub mod source;
pub mod synth;

pub use mot::{parse_mot_annotations, write_mot};
pub use pnm::{decode_pnm, encode_pnm, load_pnm, save_pnm};
pub use replay::{replay, replay_trace, LatencyModel, ReplayConfig, ReplaySession, TraceSpec, DEFAULT_LINK_MBPS};
pub use report::{latency_summary, poi_cdf, Accuracy, CdfPoint, FrameRecord, LatencySummary, ReplayReport, REPORT_SCHEMA};
pub use source::{load_frames, write_sequence, FrameSource, SequenceSource};
pub use synth::{synth_sequence, SynthObject, SynthSpec};

#[cfg(test)]
mod tests;
