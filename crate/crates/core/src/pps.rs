//! Probability-based patch sampling: picks the patches of the current frame
//! worth sending, from the previous frame's detections and the inter-frame
//! difference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{bbox_to_poi, expand_poi, patch_pixel_diff, rect_to_indices};
use crate::model::{to_grayscale, BBox, Frame, PatchGrid, PoiSet};
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpsConfig {
    /// Fraction of the sampling region kept, in `(0, 1]`.
    pub sampling_rate: f64,
    /// Per-patch absolute-difference sum above which a patch joins the region.
    pub diff_threshold: u64,
    /// Expansion margin around each box, in patches.
    pub margin: usize,
    pub rng_seed: u64,
}

impl Default for PpsConfig {
    fn default() -> Self {
        Self { sampling_rate: 0.9, diff_threshold: 200, margin: 1, rng_seed: 0 }
    }
}

impl PpsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0 && self.sampling_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!("sampling rate {} outside (0, 1]", self.sampling_rate)));
        }
        Ok(())
    }

    /// `ceil(p * region)`; the epsilon keeps products like `0.9 * 30` from
    /// rounding up past an exact integer.
    pub fn sample_count(&self, region: usize) -> usize {
        ((self.sampling_rate * region as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Sampling region before the random draw: expanded box patches plus any
/// patch outside them whose frame difference exceeds the threshold.
pub fn sampling_region(prev: &Frame, curr: &Frame, prev_boxes: &[BBox], grid: &PatchGrid, cfg: &PpsConfig) -> Result<PoiSet> {
    for f in [prev, curr] {
        if !grid.matches(f.width(), f.height()) {
            return Err(Error::DimensionMismatch(format!("frame {}x{} vs grid", f.width(), f.height())));
        }
    }
    let (w, h, p) = (grid.width(), grid.height(), grid.patch_size);
    let mut region = PoiSet::empty(*grid);
    for b in prev_boxes.iter().filter(|b| b.is_valid() && !b.is_degenerate()) {
        let rect = expand_poi(&bbox_to_poi(b, p), cfg.margin, w, h, p);
        region = region.union(&rect_to_indices(&rect, grid));
    }
    let diff = patch_pixel_diff(&to_grayscale(prev), &to_grayscale(curr), grid)?;
    let triggered: Vec<usize> = diff
        .sums
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > cfg.diff_threshold && !region.contains(i))
        .map(|(i, _)| i)
        .collect();
    if !triggered.is_empty() {
        region = region.union(&PoiSet::new(*grid, triggered)?);
    }
    Ok(region)
}

/// Chooses the patches of `curr` to transmit. Deterministic for a given
/// generator state; the result is sorted.
pub fn sample_pois(
    prev: &Frame,
    curr: &Frame,
    prev_boxes: &[BBox],
    grid: &PatchGrid,
    cfg: &PpsConfig,
    rng: &mut XorShift64Star,
) -> Result<PoiSet> {
    cfg.validate()?;
    let region = sampling_region(prev, curr, prev_boxes, grid, cfg)?;
    let k = cfg.sample_count(region.len());
    if k == region.len() {
        return Ok(region);
    }
    let picked = rng.sample_without_replacement(region.indices(), k);
    PoiSet::new(*grid, picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn textured(w: usize, h: usize, seed: u64) -> Frame {
        let mut rng = XorShift64Star::new(seed);
        Frame::new(0, w, h, 3, (0..w * h * 3).map(|_| rng.next_u64() as u8).collect()).unwrap()
    }

    fn cfg(p: f64, m: usize) -> PpsConfig {
        PpsConfig { sampling_rate: p, diff_threshold: 200, margin: m, rng_seed: 1 }
    }

    #[test]
    fn full_rate_returns_region() {
        let f = textured(64, 64, 1);
        let g = PatchGrid::for_frame(&f, 16).unwrap();
        let boxes = [BBox::new(20.0, 20.0, 30.0, 40.0).unwrap()];
        let c = cfg(1.0, 1);
        let region = sampling_region(&f, &f, &boxes, &g, &c).unwrap();
        let out = sample_pois(&f, &f, &boxes, &g, &c, &mut XorShift64Star::new(5)).unwrap();
        assert_eq!(out, region);
        assert_eq!(out.indices(), &[0, 1, 2, 4, 5, 6, 8, 9, 10, 12, 13, 14]);
    }

    #[test]
    fn empty_inputs_give_empty_set() {
        let f = textured(48, 48, 2);
        let g = PatchGrid::for_frame(&f, 16).unwrap();
        let out = sample_pois(&f, &f, &[], &g, &cfg(0.9, 1), &mut XorShift64Star::new(0)).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn box_inside_centre_patch() {
        // 3x3 grid; patch 5 is row 1, col 2 -> pixels [32,48) x [16,32)
        let f = textured(48, 48, 3);
        let g = PatchGrid::for_frame(&f, 16).unwrap();
        let boxes = [BBox::new(34.0, 18.0, 40.0, 28.0).unwrap()];
        let out = sample_pois(&f, &f, &boxes, &g, &cfg(1.0, 0), &mut XorShift64Star::new(0)).unwrap();
        assert_eq!(out.indices(), &[5]);
    }

    #[test]
    fn diff_patches_join_region() {
        let prev = Frame::filled(0, 48, 48, 1, 10).unwrap();
        let mut px = prev.pixels().to_vec();
        for y in 0..4 {
            for x in 0..4 {
                px[y * 48 + x] = 200; // 16 * 190 = 3040 > 200 in patch 0
            }
        }
        px[47 * 48 + 47] = 11; // patch 8 changes by 1 only
        let curr = Frame::new(1, 48, 48, 1, px).unwrap();
        let g = PatchGrid::for_frame(&prev, 16).unwrap();
        let out = sample_pois(&prev, &curr, &[], &g, &cfg(1.0, 0), &mut XorShift64Star::new(0)).unwrap();
        assert_eq!(out.indices(), &[0]);
    }

    #[test]
    fn degenerate_boxes_are_ignored() {
        let f = textured(48, 48, 4);
        let g = PatchGrid::for_frame(&f, 16).unwrap();
        let boxes = [BBox::new(20.0, 20.0, 20.0, 30.0).unwrap()];
        assert!(sample_pois(&f, &f, &boxes, &g, &cfg(1.0, 1), &mut XorShift64Star::new(0)).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_rate() {
        let f = textured(16, 16, 4);
        let g = PatchGrid::for_frame(&f, 16).unwrap();
        assert!(sample_pois(&f, &f, &[], &g, &cfg(0.0, 1), &mut XorShift64Star::new(0)).is_err());
        assert!(sample_pois(&f, &f, &[], &g, &cfg(1.5, 1), &mut XorShift64Star::new(0)).is_err());
    }

    #[test]
    fn sample_count_is_ceiling() {
        let c = cfg(0.9, 1);
        assert_eq!(c.sample_count(0), 0);
        assert_eq!(c.sample_count(1), 1);
        assert_eq!(c.sample_count(10), 9);
        assert_eq!(c.sample_count(11), 10);
        assert_eq!(c.sample_count(30), 27);
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<BBox>> {
        prop::collection::vec(
            (0f32..120.0, 0f32..120.0, 1f32..40.0, 1f32..40.0).prop_map(|(x, y, w, h)| BBox { x1: x, y1: y, x2: x + w, y2: y + h }),
            0..5,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn output_is_sized_subset_of_region(boxes in arb_boxes(), seed in any::<u64>(), p in 0.05f64..=1.0) {
            let prev = textured(128, 128, seed);
            let curr = textured(128, 128, seed ^ 1);
            let g = PatchGrid::for_frame(&prev, 16).unwrap();
            let c = PpsConfig { sampling_rate: p, diff_threshold: 200, margin: 1, rng_seed: seed };
            let region = sampling_region(&prev, &curr, &boxes, &g, &c).unwrap();
            let a = sample_pois(&prev, &curr, &boxes, &g, &c, &mut XorShift64Star::new(seed)).unwrap();
            let b = sample_pois(&prev, &curr, &boxes, &g, &c, &mut XorShift64Star::new(seed)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), c.sample_count(region.len()));
            prop_assert!(a.indices().iter().all(|&i| region.contains(i)));
        }

        #[test]
        fn raising_threshold_never_grows_region(boxes in arb_boxes(), seed in any::<u64>(), f1 in 0u64..60_000, df in 0u64..20_000) {
            let prev = textured(128, 128, seed);
            let curr = textured(128, 128, seed.wrapping_add(7));
            let g = PatchGrid::for_frame(&prev, 16).unwrap();
            let lo = PpsConfig { diff_threshold: f1, ..cfg(1.0, 1) };
            let hi = PpsConfig { diff_threshold: f1 + df, ..lo };
            let r_lo = sampling_region(&prev, &curr, &boxes, &g, &lo).unwrap();
            let r_hi = sampling_region(&prev, &curr, &boxes, &g, &hi).unwrap();
            prop_assert!(r_hi.indices().iter().all(|&i| r_lo.contains(i)));
        }
    }
}
