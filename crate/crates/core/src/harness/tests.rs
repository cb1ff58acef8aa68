use std::sync::Arc;

use super::*;
use crate::akis::AkisConfig;
use crate::error::{Error, Result};
use crate::eval::{OracleConfig, Phase};
use crate::model::Frame;
use crate::pps::PpsConfig;
use crate::protocol::{AkisMode, Detector};
use crate::vit::{Engine, EngineConfig};

fn scene(frames: usize, vx: i64) -> SynthSpec {
    SynthSpec {
        width: 64,
        height: 64,
        channels: 3,
        frames,
        start_id: 1,
        seed: 11,
        objects: vec![
            SynthObject { x: 4, y: 6, w: 14, h: 12, vx, vy: 0, class_id: 1 },
            SynthObject { x: 36, y: 30, w: 20, h: 24, vx: 0, vy: vx, class_id: 2 },
        ],
        pan: (0, 0),
        motion_start: 0,
    }
}

fn setup(mode: AkisMode, p: f64) -> (ReplayConfig, Arc<Engine>) {
    let ecfg = EngineConfig { embed_dim: 32, depth: 2, heads: 2, ..EngineConfig::default() };
    let pps = PpsConfig { sampling_rate: p, margin: 1, ..PpsConfig::default() };
    let cfg = ReplayConfig::new(ecfg, 3, pps, AkisConfig::default(), mode);
    (cfg, Arc::new(Engine::new(ecfg).unwrap()))
}

fn run(spec: &SynthSpec, cfg: &ReplayConfig, engine: &Arc<Engine>) -> ReplayReport {
    let (frames, gt) = synth_sequence(spec).unwrap();
    replay(frames.into_iter().map(Ok), Some(Arc::new(gt)), cfg, engine.clone()).unwrap()
}

#[test]
fn static_scene_full_coverage_is_perfect() {
    let (cfg, engine) = setup(AkisMode::Fixed(5), 1.0);
    let r = run(&scene(12, 0), &cfg, &engine);
    assert!(r.complete, "{:?}", r.error);
    let acc = r.accuracy.unwrap();
    assert_eq!((acc.map_at_50, acc.recall_at_50), (1.0, 1.0));
    assert_eq!(r.frames.len(), 12);
    let kinds: Vec<Phase> = r.frames.iter().map(|f| f.cost.phase).collect();
    assert_eq!(kinds.iter().filter(|p| **p == Phase::Keyframe).count(), 3);
}

#[test]
fn all_keyframes_cost_one_frame_plus_framing() {
    let (cfg, engine) = setup(AkisMode::Fixed(1), 0.9);
    let r = run(&scene(6, 2), &cfg, &engine);
    let bw = r.bandwidth.unwrap();
    let full = 64.0 * 64.0 * 3.0;
    assert_eq!(bw.normalized, (full + 23.0) / full);
    assert_eq!(bw.non_keyframe.frames, 0);
    assert!(r.poi_cdf.is_empty());
}

#[test]
fn bytes_sent_equal_encoded_lengths() {
    let (cfg, engine) = setup(AkisMode::Fixed(4), 0.9);
    let r = run(&scene(9, 1), &cfg, &engine);
    for f in &r.frames {
        let expected = match f.cost.phase {
            Phase::Keyframe => 10 + 13 + 64 * 64 * 3,
            Phase::NonKeyframe => 10 + 12 + f.cost.patches_sent * (4 + 768),
        };
        assert_eq!(f.cost.bytes_sent, expected);
        assert_eq!(f.poi_proportion, f.cost.patches_sent as f64 / 16.0);
    }
}

#[test]
fn loopback_reports_are_byte_identical() {
    let (cfg, engine) = setup(AkisMode::Adaptive, 0.9);
    let a = run(&scene(20, 2), &cfg, &engine).to_json();
    let b = run(&scene(20, 2), &cfg, &engine).to_json();
    assert_eq!(a, b);
    let parsed = ReplayReport::from_json(&a).unwrap();
    assert_eq!(parsed.to_json(), a);
    assert!(a.contains(REPORT_SCHEMA));
}

#[test]
fn fixed_and_pinned_adaptive_agree() {
    let (fixed, engine) = setup(AkisMode::Fixed(4), 0.9);
    let (mut pinned, _) = setup(AkisMode::Adaptive, 0.9);
    pinned.camera.akis = AkisConfig { k_lower: 4, k_upper: 4, ..AkisConfig::default() };
    let a = run(&scene(15, 3), &fixed, &engine);
    let b = run(&scene(15, 3), &pinned, &engine);
    assert_eq!(a.frames, b.frames);
    assert_eq!(a.bandwidth, b.bandwidth);
    assert_eq!(a.accuracy, b.accuracy);
    assert_eq!(a.interval_trace, b.interval_trace);
    assert_eq!(a.poi_cdf, b.poi_cdf);
}

#[test]
fn source_error_gives_partial_report() {
    let (cfg, engine) = setup(AkisMode::Fixed(3), 0.9);
    let (frames, gt) = synth_sequence(&scene(5, 1)).unwrap();
    let mut items: Vec<Result<Frame>> = frames.into_iter().map(Ok).collect();
    items.insert(3, Err(Error::Image("disk on fire".into())));
    let r = replay(items, Some(Arc::new(gt)), &cfg, engine).unwrap();
    assert!(!r.complete);
    assert!(r.error.as_deref().unwrap().contains("disk on fire"));
    assert_eq!(r.frames.len(), 3);
}

#[test]
fn wrong_frame_size_aborts_cleanly() {
    let (cfg, engine) = setup(AkisMode::Fixed(3), 0.9);
    let mut spec = scene(3, 0);
    spec.width = 96;
    let (frames, _) = synth_sequence(&spec).unwrap();
    let r = replay(frames.into_iter().map(Ok), None, &cfg, engine).unwrap();
    assert!(!r.complete);
    assert!(r.frames.is_empty());
    assert!(r.accuracy.is_none());
}

#[test]
fn mismatched_engine_is_a_config_error() {
    let (cfg, _) = setup(AkisMode::Fixed(3), 0.9);
    let other = Arc::new(Engine::new(EngineConfig::default()).unwrap());
    assert!(matches!(replay(Vec::new(), None, &cfg, other), Err(Error::InvalidConfig(_))));
}

#[test]
fn oracle_drop_lowers_recall() {
    let (mut cfg, engine) = setup(AkisMode::Fixed(2), 1.0);
    cfg.detector = Detector::Oracle(OracleConfig { drop_rate: 0.5, jitter: 0.0, rng_seed: 3 });
    let r = run(&scene(30, 0), &cfg, &engine);
    let acc = r.accuracy.unwrap();
    assert!(acc.recall_at_50 < 0.9 && acc.recall_at_50 > 0.1, "{acc:?}");
}

#[test]
fn trace_replay_hits_requested_proportion() {
    let ecfg = EngineConfig { frame_w: 800, frame_h: 320, ..EngineConfig::default() };
    let cfg = ReplayConfig::new(ecfg, 3, PpsConfig::default(), AkisConfig::default(), AkisMode::Fixed(5));
    let trace = TraceSpec { frames: 50, interval: 5, patch_counts: vec![250], seed: 1 };
    let r = replay_trace(&trace, &cfg).unwrap();
    assert!(r.complete, "{:?}", r.error);
    let bw = r.bandwidth.unwrap();
    assert_eq!(bw.keyframe.frames, 10);
    assert!((bw.non_keyframe.normalized - 0.25).abs() / 0.25 < 0.02);
    assert_eq!(r.mean_poi_proportion(), Some(0.25));
    let too_many = TraceSpec { patch_counts: vec![1001], ..trace };
    assert!(replay_trace(&too_many, &cfg).is_err());
}

#[test]
fn session_driver_rejects_out_of_order_use() {
    let (cfg, _) = setup(AkisMode::Fixed(3), 0.9);
    let mut s = ReplaySession::new(cfg).unwrap();
    let (frames, _) = synth_sequence(&scene(2, 0)).unwrap();
    assert!(s.complete(&crate::protocol::Message::Bye, None).is_err());
    s.request(&frames[0]).unwrap();
    assert!(s.request(&frames[1]).is_err());
}

#[test]
fn latency_model_arithmetic() {
    let m = LatencyModel { link_mbps: 100.0, per_message_overhead_us: 50.0, camera_ops_per_us: 10.0, server_flops_per_us: 1.0 };
    assert_eq!(m.transmit_us(1250), 150.0);
    assert_eq!(m.preprocess_us(100), 10.0);
    assert!(LatencyModel { link_mbps: 0.0, ..m }.validate().is_err());
    assert_eq!(LatencyModel::default().link_mbps, 93.9);
}
