//! Oracle detector, objectness head stub, detection metrics and cost
//! accounting.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{iou, BBox, Detection};
use crate::rng::XorShift64Star;
use crate::vit::{Engine, FeaturePyramid};

pub const IOU_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub bbox: BBox,
    pub class_id: u16,
}

/// Ground-truth boxes keyed by frame id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationStore {
    frames: BTreeMap<u64, Vec<Annotation>>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, frame_id: u64, annotation: Annotation) -> Result<()> {
        if !annotation.bbox.is_valid() {
            return Err(Error::InvalidBox(format!("{:?}", annotation.bbox)));
        }
        self.frames.entry(frame_id).or_default().push(annotation);
        Ok(())
    }

    pub fn get(&self, frame_id: u64) -> &[Annotation] {
        self.frames.get(&frame_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn frame_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.frames.keys().copied()
    }

    pub fn total_boxes(&self) -> usize {
        self.frames.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total_boxes() == 0
    }

    pub fn classes(&self) -> BTreeSet<u16> {
        self.frames.values().flatten().map(|a| a.class_id).collect()
    }

    /// Keeps only the given frame ids.
    pub fn restricted_to(&self, ids: &BTreeSet<u64>) -> AnnotationStore {
        AnnotationStore { frames: self.frames.iter().filter(|(k, _)| ids.contains(k)).map(|(k, v)| (*k, v.clone())).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Probability of dropping each ground-truth box, in `[0, 1)`.
    pub drop_rate: f64,
    /// Maximum per-coordinate perturbation in pixels.
    pub jitter: f64,
    pub rng_seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { drop_rate: 0.0, jitter: 0.0, rng_seed: 0 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidConfig(format!("drop rate {} outside [0, 1)", self.drop_rate)));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidConfig(format!("jitter {} must be a non-negative number", self.jitter)));
        }
        Ok(())
    }
}

/// Degraded ground truth standing in for a trained detector. Per box, in
/// store order: one draw decides the drop; survivors take four jitter draws
/// (x1, y1, x2, y2), skipped when jitter is zero. Scores are 1.
pub fn oracle_detect(frame_id: u64, store: &AnnotationStore, cfg: &OracleConfig, rng: &mut XorShift64Star) -> Vec<Detection> {
    let mut out = Vec::new();
    for a in store.get(frame_id) {
        if rng.next_f64() < cfg.drop_rate {
            continue;
        }
        let mut b = a.bbox;
        if cfg.jitter > 0.0 {
            let j = cfg.jitter as f32;
            let mut d = || rng.uniform_f32(-j, j);
            let (x1, y1, x2, y2) = (b.x1 + d(), b.y1 + d(), b.x2 + d(), b.y2 + d());
            b = BBox { x1: x1.min(x2), y1: y1.min(y2), x2: x1.max(x2), y2: y1.max(y2) };
        }
        out.push(Detection { bbox: b, score: 1.0, class_id: a.class_id });
    }
    out
}

/// Per-cell objectness on the 1/16 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectnessGrid {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f32>,
}

/// Shape-checked stand-in for a detection head: a linear map of each `f3`
/// cell to one logit, squashed by the logistic function. Only used for
/// probes, never for accuracy numbers.
pub fn head_predict(pyr: &FeaturePyramid, engine: &Engine) -> ObjectnessGrid {
    let head = &engine.weights().head;
    let f3 = &pyr.f3;
    let logits = head.forward(&f3.data, f3.rows * f3.cols);
    let values = logits.into_iter().map(|z| (1.0 / (1.0 + (-z as f64).exp())) as f32).collect();
    ObjectnessGrid { rows: f3.rows, cols: f3.cols, values }
}

/// Cells above `threshold` as patch-sized boxes scored by objectness.
pub fn head_detections(grid: &ObjectnessGrid, patch_size: usize, threshold: f32) -> Vec<Detection> {
    let p = patch_size as f32;
    grid.values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > threshold)
        .map(|(i, &v)| {
            let (r, c) = ((i / grid.cols) as f32, (i % grid.cols) as f32);
            Detection { bbox: BBox { x1: c * p, y1: r * p, x2: (c + 1.0) * p, y2: (r + 1.0) * p }, score: v, class_id: 1 }
        })
        .collect()
}

pub type DetectionsByFrame = BTreeMap<u64, Vec<Detection>>;

/// Greedy score-ordered matching for one class. Returns `(is_tp per ranked
/// detection, gt count)`.
fn match_class(dets: &DetectionsByFrame, store: &AnnotationStore, class: Option<u16>) -> (Vec<bool>, usize) {
    let keep = |c: u16| class.map_or(true, |k| k == c);
    let mut ranked: Vec<(u64, Detection)> =
        dets.iter().flat_map(|(&f, ds)| ds.iter().filter(|d| keep(d.class_id)).map(move |d| (f, *d))).collect();
    // stable: ties keep frame/insertion order
    ranked.sort_by(|a, b| b.1.score.total_cmp(&a.1.score));

    let gt_count = store.frame_ids().map(|f| store.get(f).iter().filter(|a| keep(a.class_id)).count()).sum();
    let mut matched: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    let mut hits = Vec::with_capacity(ranked.len());
    for (frame, det) in ranked {
        let gts = store.get(frame);
        let used = matched.entry(frame).or_insert_with(|| vec![false; gts.len()]);
        let best = gts
            .iter()
            .enumerate()
            .filter(|(i, g)| !used[*i] && keep(g.class_id))
            .map(|(i, g)| (i, iou(&det.bbox, &g.bbox)))
            .filter(|(_, v)| *v >= IOU_THRESHOLD)
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
        match best {
            Some((i, _)) => {
                used[i] = true;
                hits.push(true);
            }
            None => hits.push(false),
        }
    }
    (hits, gt_count)
}

/// All-points interpolated area under the precision-recall curve.
fn average_precision(hits: &[bool], gt_count: usize) -> f64 {
    if gt_count == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(hits.len());
    let mut precision = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        tp += hit as usize;
        recall.push(tp as f64 / gt_count as f64);
        precision.push(tp as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Mean over ground-truth classes of single-class AP at IoU 0.5.
/// Zero when the store holds no boxes.
pub fn map_at_50(dets: &DetectionsByFrame, store: &AnnotationStore) -> f64 {
    let classes = store.classes();
    if classes.is_empty() {
        return 0.0;
    }
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let (hits, n) = match_class(dets, store, Some(c));
            average_precision(&hits, n)
        })
        .sum();
    total / classes.len() as f64
}

/// Fraction of ground-truth boxes matched at IoU 0.5 (class-aware).
pub fn recall_at_50(dets: &DetectionsByFrame, store: &AnnotationStore) -> f64 {
    let total = store.total_boxes();
    if total == 0 {
        return 0.0;
    }
    let tp: usize = store.classes().iter().map(|&c| match_class(dets, store, Some(c)).0.iter().filter(|h| **h).count()).sum();
    tp as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Keyframe,
    NonKeyframe,
}

/// Per-frame cost; durations in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostRecord {
    pub frame_id: u64,
    pub phase: Phase,
    pub bytes_sent: u64,
    pub patches_sent: u64,
    pub t_preprocess_us: f64,
    pub t_transmit_us: f64,
    pub t_infer_us: f64,
}

impl CostRecord {
    pub fn latency_us(&self) -> f64 {
        self.t_preprocess_us + self.t_transmit_us + self.t_infer_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseBandwidth {
    pub frames: u64,
    pub bytes: u64,
    pub patches: u64,
    /// `bytes / (frames * full_frame_bytes)`; 0 when there are no frames.
    pub normalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSummary {
    pub frames: u64,
    pub total_bytes: u64,
    pub full_frame_bytes: u64,
    pub normalized: f64,
    pub keyframe: PhaseBandwidth,
    pub non_keyframe: PhaseBandwidth,
}

pub fn bandwidth_report(records: &[CostRecord], full_frame_bytes: u64) -> Result<BandwidthSummary> {
    if records.is_empty() {
        return Err(Error::Empty("no cost records"));
    }
    if full_frame_bytes == 0 {
        return Err(Error::InvalidConfig("full frame size must be positive".into()));
    }
    let mut key = PhaseBandwidth::default();
    let mut non = PhaseBandwidth::default();
    for r in records {
        let slot = match r.phase {
            Phase::Keyframe => &mut key,
            Phase::NonKeyframe => &mut non,
        };
        slot.frames += 1;
        slot.bytes += r.bytes_sent;
        slot.patches += r.patches_sent;
    }
    for slot in [&mut key, &mut non] {
        if slot.frames > 0 {
            slot.normalized = slot.bytes as f64 / (slot.frames * full_frame_bytes) as f64;
        }
    }
    let frames = records.len() as u64;
    let total_bytes = key.bytes + non.bytes;
    Ok(BandwidthSummary {
        frames,
        total_bytes,
        full_frame_bytes,
        normalized: total_bytes as f64 / (frames * full_frame_bytes) as f64,
        keyframe: key,
        non_keyframe: non,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bx(x1: f32, y1: f32, x2: f32, y2: f32) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    fn det(b: BBox, score: f32) -> Detection {
        Detection { bbox: b, score, class_id: 1 }
    }

    fn store_of(frames: &[(u64, Vec<BBox>)]) -> AnnotationStore {
        let mut s = AnnotationStore::new();
        for (f, boxes) in frames {
            for b in boxes {
                s.insert(*f, Annotation { bbox: *b, class_id: 1 }).unwrap();
            }
        }
        s
    }

    #[test]
    fn oracle_identity_and_reproducibility() {
        let s = store_of(&[(3, vec![bx(0.0, 0.0, 10.0, 10.0), bx(5.0, 5.0, 20.0, 30.0)])]);
        let exact = oracle_detect(3, &s, &OracleConfig::default(), &mut XorShift64Star::new(1));
        assert_eq!(exact.iter().map(|d| d.bbox).collect::<Vec<_>>(), s.get(3).iter().map(|a| a.bbox).collect::<Vec<_>>());
        assert!(exact.iter().all(|d| d.score == 1.0));
        assert!(oracle_detect(4, &s, &OracleConfig::default(), &mut XorShift64Star::new(1)).is_empty());

        let noisy = OracleConfig { drop_rate: 0.3, jitter: 2.0, rng_seed: 0 };
        let a = oracle_detect(3, &s, &noisy, &mut XorShift64Star::new(9));
        let b = oracle_detect(3, &s, &noisy, &mut XorShift64Star::new(9));
        assert_eq!(a, b);
        for d in &a {
            assert!(d.bbox.is_valid());
        }
    }

    #[test]
    fn oracle_near_total_drop() {
        let boxes: Vec<BBox> = (0..10).map(|i| bx(i as f32, 0.0, i as f32 + 5.0, 5.0)).collect();
        let s = store_of(&[(0, boxes)]);
        let cfg = OracleConfig { drop_rate: 0.999, jitter: 0.0, rng_seed: 0 };
        let kept: usize = (0..1000).map(|seed| oracle_detect(0, &s, &cfg, &mut XorShift64Star::new(seed)).len()).sum();
        // expectation is 10 boxes over 10,000 draws
        assert!(kept < 40, "kept {kept}");
    }

    #[test]
    fn oracle_config_validation() {
        assert!(OracleConfig { drop_rate: 1.0, ..Default::default() }.validate().is_err());
        assert!(OracleConfig { jitter: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn map_examples() {
        let gt = vec![bx(0.0, 0.0, 10.0, 10.0), bx(50.0, 50.0, 60.0, 60.0)];
        let s = store_of(&[(1, gt.clone())]);
        let perfect: DetectionsByFrame = [(1, gt.iter().map(|b| det(*b, 0.7)).collect())].into();
        assert_eq!(map_at_50(&perfect, &s), 1.0);
        assert_eq!(recall_at_50(&perfect, &s), 1.0);
        assert_eq!(map_at_50(&DetectionsByFrame::new(), &s), 0.0);

        let mixed: DetectionsByFrame = [(1, vec![det(gt[0], 0.9), det(bx(200.0, 200.0, 210.0, 210.0), 0.8)])].into();
        assert_eq!(map_at_50(&mixed, &s), 0.5);
        assert_eq!(recall_at_50(&mixed, &s), 0.5);

        assert_eq!(map_at_50(&perfect, &AnnotationStore::new()), 0.0);
    }

    #[test]
    fn duplicate_detections_count_once() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let s = store_of(&[(0, vec![g])]);
        let dets: DetectionsByFrame = [(0, vec![det(g, 0.9), det(g, 0.8)])].into();
        assert_eq!(map_at_50(&dets, &s), 1.0);
        let dets: DetectionsByFrame = [(0, vec![det(g, 0.8), det(bx(100.0, 0.0, 110.0, 10.0), 0.9)])].into();
        assert_eq!(map_at_50(&dets, &s), 0.5);
    }

    #[test]
    fn map_averages_over_classes() {
        let mut s = AnnotationStore::new();
        s.insert(0, Annotation { bbox: bx(0.0, 0.0, 10.0, 10.0), class_id: 1 }).unwrap();
        s.insert(0, Annotation { bbox: bx(20.0, 0.0, 30.0, 10.0), class_id: 2 }).unwrap();
        let dets: DetectionsByFrame = [(0, vec![det(bx(0.0, 0.0, 10.0, 10.0), 0.9)])].into();
        assert_eq!(map_at_50(&dets, &s), 0.5);
        // class mismatch never matches
        let wrong: DetectionsByFrame = [(0, vec![Detection { bbox: bx(0.0, 0.0, 10.0, 10.0), score: 0.9, class_id: 2 }])].into();
        assert_eq!(map_at_50(&wrong, &s), 0.0);
    }

    fn rec(phase: Phase, bytes: u64, patches: u64) -> CostRecord {
        CostRecord { frame_id: 0, phase, bytes_sent: bytes, patches_sent: patches, t_preprocess_us: 0.0, t_transmit_us: 0.0, t_infer_us: 0.0 }
    }

    #[test]
    fn bandwidth_examples() {
        let full = 64 * 64 * 3;
        let all_key = vec![rec(Phase::Keyframe, full + 23, 16); 5];
        let s = bandwidth_report(&all_key, full).unwrap();
        assert!(s.normalized >= 1.0 && s.normalized < 1.02);
        assert_eq!(s.non_keyframe.frames, 0);

        let one = [rec(Phase::NonKeyframe, 4 * 768, 4)];
        let s = bandwidth_report(&one, 16 * 768).unwrap();
        assert_eq!(s.non_keyframe.normalized, 0.25);
        assert!(matches!(bandwidth_report(&[], full), Err(Error::Empty(_))));
    }

    #[test]
    fn bandwidth_is_additive() {
        let a = vec![rec(Phase::Keyframe, 1000, 4), rec(Phase::NonKeyframe, 300, 1)];
        let b = vec![rec(Phase::NonKeyframe, 200, 1)];
        let joined: Vec<_> = a.iter().chain(&b).copied().collect();
        let (sa, sb, sj) =
            (bandwidth_report(&a, 1000).unwrap(), bandwidth_report(&b, 1000).unwrap(), bandwidth_report(&joined, 1000).unwrap());
        assert_eq!(sj.total_bytes, sa.total_bytes + sb.total_bytes);
        assert_eq!(sj.frames, sa.frames + sb.frames);
        assert_eq!(sj.non_keyframe.patches, 2);
    }

    fn scenario() -> impl Strategy<Value = (Vec<BBox>, Vec<(usize, f32, bool)>)> {
        let gts = prop::collection::vec((0u32..20).prop_map(|i| bx(i as f32 * 20.0, 0.0, i as f32 * 20.0 + 10.0, 10.0)), 1..6);
        let dets = prop::collection::vec((0usize..8, 0.01f32..1.0, any::<bool>()), 0..10);
        (gts, dets)
    }

    /// Detections either copy a GT box or land far away.
    fn build(gts: &[BBox], spec: &[(usize, f32, bool)]) -> Vec<Detection> {
        spec.iter()
            .map(|&(i, s, hit)| if hit { det(gts[i % gts.len()], s) } else { det(bx(1000.0 + i as f32 * 20.0, 500.0, 1010.0 + i as f32 * 20.0, 510.0), s) })
            .collect()
    }

    proptest! {
        #[test]
        fn map_depends_only_on_order((mut gts, spec) in scenario(), scale in 0.01f32..1.0) {
            gts.sort_by(|a, b| a.x1.total_cmp(&b.x1));
            gts.dedup();
            let s = store_of(&[(0, gts.clone())]);
            let dets = build(&gts, &spec);
            let rescaled: Vec<Detection> = dets.iter().map(|d| det(d.bbox, d.score * scale)).collect();
            let a = map_at_50(&[(0, dets)].into(), &s);
            let b = map_at_50(&[(0, rescaled)].into(), &s);
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn low_false_positive_never_helps((mut gts, spec) in scenario()) {
            gts.sort_by(|a, b| a.x1.total_cmp(&b.x1));
            gts.dedup();
            let s = store_of(&[(0, gts.clone())]);
            let dets = build(&gts, &spec);
            let before = map_at_50(&[(0, dets.clone())].into(), &s);
            let mut more = dets;
            more.push(det(bx(5000.0, 5000.0, 5010.0, 5010.0), 0.001));
            prop_assert!(map_at_50(&[(0, more)].into(), &s) <= before + 1e-12);
        }

        #[test]
        fn new_true_positive_never_hurts((mut gts, spec) in scenario(), score in 0.0f32..1.0) {
            gts.sort_by(|a, b| a.x1.total_cmp(&b.x1));
            gts.dedup();
            let s = store_of(&[(0, gts.clone())]);
            let dets = build(&gts, &spec);
            let before = map_at_50(&[(0, dets.clone())].into(), &s);
            let hit: BTreeSet<usize> = spec.iter().filter(|t| t.2).map(|t| t.0 % gts.len()).collect();
            if let Some(free) = (0..gts.len()).find(|i| !hit.contains(i)) {
                let mut more = dets;
                more.push(det(gts[free], score));
                prop_assert!(map_at_50(&[(0, more)].into(), &s) >= before - 1e-12);
            }
        }
    }
}
