//! Versioned JSON replay report. Field reference: `docs/report-schema.md`.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::{bandwidth_report, map_at_50, recall_at_50, AnnotationStore, BandwidthSummary, CostRecord, DetectionsByFrame, Phase};
use crate::protocol::IntervalEvent;

use super::replay::ReplayConfig;

pub const REPORT_SCHEMA: &str = "arena.replay-report/v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(flatten)]
    pub cost: CostRecord,
    /// Fraction of patches transmitted (1 for keyframes).
    pub poi_proportion: f64,
    pub detections: u64,
    /// Measured request→reply time; socket mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_round_trip_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_preprocess_us: f64,
    pub mean_transmit_us: f64,
    pub mean_infer_us: f64,
    pub mean_total_us: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_wall_round_trip_us: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub map_at_50: f64,
    pub recall_at_50: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub proportion: f64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub schema: String,
    pub mode: String,
    pub complete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: ReplayConfig,
    pub frames: Vec<FrameRecord>,
    pub bandwidth: Option<BandwidthSummary>,
    pub latency: LatencySummary,
    pub accuracy: Option<Accuracy>,
    pub interval_trace: Vec<IntervalEvent>,
    /// Empirical CDF of the non-keyframe PoI proportion.
    pub poi_cdf: Vec<CdfPoint>,
}

impl ReplayReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn mean_poi_proportion(&self) -> Option<f64> {
        let v: Vec<f64> = self.frames.iter().filter(|f| f.cost.phase == Phase::NonKeyframe).map(|f| f.poi_proportion).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub(crate) struct ReportParts<'a> {
    pub mode: &'a str,
    pub config: ReplayConfig,
    pub frames: Vec<FrameRecord>,
    pub detections: DetectionsByFrame,
    pub annotations: Option<&'a AnnotationStore>,
    pub interval_trace: Vec<IntervalEvent>,
    pub full_frame_bytes: u64,
    pub error: Option<String>,
}

pub(crate) fn build_report(p: ReportParts<'_>) -> ReplayReport {
    let costs: Vec<CostRecord> = p.frames.iter().map(|f| f.cost).collect();
    let bandwidth = bandwidth_report(&costs, p.full_frame_bytes).ok();
    let accuracy = p.annotations.filter(|a| !a.is_empty() && !p.frames.is_empty()).map(|store| {
        let ids = p.frames.iter().map(|f| f.cost.frame_id).collect();
        let gt = store.restricted_to(&ids);
        Accuracy { map_at_50: map_at_50(&p.detections, &gt), recall_at_50: recall_at_50(&p.detections, &gt) }
    });
    ReplayReport {
        schema: REPORT_SCHEMA.to_string(),
        mode: p.mode.to_string(),
        complete: p.error.is_none(),
        error: p.error,
        config: p.config,
        latency: latency_summary(&p.frames),
        poi_cdf: poi_cdf(&p.frames),
        frames: p.frames,
        bandwidth,
        accuracy,
        interval_trace: p.interval_trace,
    }
}

fn mean(it: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = it.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

pub fn latency_summary(frames: &[FrameRecord]) -> LatencySummary {
    let c = || frames.iter().map(|f| f.cost);
    LatencySummary {
        mean_preprocess_us: mean(c().map(|r| r.t_preprocess_us)).unwrap_or(0.0),
        mean_transmit_us: mean(c().map(|r| r.t_transmit_us)).unwrap_or(0.0),
        mean_infer_us: mean(c().map(|r| r.t_infer_us)).unwrap_or(0.0),
        mean_total_us: mean(c().map(|r| r.latency_us())).unwrap_or(0.0),
        mean_wall_round_trip_us: mean(frames.iter().filter_map(|f| f.wall_round_trip_us)),
    }
}

/// Step CDF over non-keyframe PoI proportions: one point per distinct
/// value, non-decreasing, last fraction exactly 1.
pub fn poi_cdf(frames: &[FrameRecord]) -> Vec<CdfPoint> {
    let mut v: Vec<f64> = frames.iter().filter(|f| f.cost.phase == Phase::NonKeyframe).map(|f| f.poi_proportion).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut out: Vec<CdfPoint> = Vec::new();
    for (i, &p) in v.iter().enumerate() {
        if i + 1 < n && v[i + 1] == p {
            continue;
        }
        out.push(CdfPoint { proportion: p, fraction: if i + 1 == n { 1.0 } else { (i + 1) as f64 / n as f64 } });
    }
    out
}
