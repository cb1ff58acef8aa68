//! Adaptive keyframe interval switching and the block-matching flow
//! estimator it reads motion from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BBox, GreyFrame};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AkisConfig {
    /// Mean flow magnitude (pixels) separating "simple" from "complex" scenes.
    pub beta: f64,
    pub k_lower: u32,
    pub k_upper: u32,
    pub block_size: usize,
    pub search_radius: usize,
}

impl Default for AkisConfig {
    fn default() -> Self {
        Self { beta: 10.0, k_lower: 1, k_upper: 15, block_size: 8, search_radius: 8 }
    }
}

impl AkisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_lower < 1 || self.k_lower > self.k_upper {
            return Err(Error::InvalidConfig(format!("need 1 <= k_lower ({}) <= k_upper ({})", self.k_lower, self.k_upper)));
        }
        if self.block_size == 0 {
            return Err(Error::InvalidConfig("flow block size must be positive".into()));
        }
        if !self.beta.is_finite() {
            return Err(Error::InvalidConfig("beta must be finite".into()));
        }
        Ok(())
    }
}

/// Per-block integer displacement from frame `a` to frame `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub block_size: usize,
    pub rows: usize,
    pub cols: usize,
    pub vectors: Vec<(i32, i32)>,
}

impl FlowField {
    pub fn vector(&self, row: usize, col: usize) -> (i32, i32) {
        self.vectors[row * self.cols + col]
    }

    pub fn magnitude(&self, row: usize, col: usize) -> f64 {
        magnitude(self.vector(row, col))
    }

    /// A field with the same vector everywhere.
    pub fn uniform(block_size: usize, rows: usize, cols: usize, v: (i32, i32)) -> Self {
        Self { block_size, rows, cols, vectors: vec![v; rows * cols] }
    }
}

pub fn magnitude((dx, dy): (i32, i32)) -> f64 {
    ((dx as f64).powi(2) + (dy as f64).powi(2)).sqrt()
}

/// Dense motion estimate between two frames.
pub trait FlowEstimator {
    fn estimate(&self, a: &GreyFrame, b: &GreyFrame) -> Result<FlowField>;
}

/// Exhaustive block matching: every block of `a` is compared against `b`
/// at each integer displacement within `±search_radius` whose window stays
/// inside the frame; lowest SAD wins. Ties prefer the smaller squared
/// magnitude, then the smaller (signed) `dy`, then the smaller `dx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMatcher {
    pub block_size: usize,
    pub search_radius: usize,
}

impl FlowEstimator for BlockMatcher {
    fn estimate(&self, a: &GreyFrame, b: &GreyFrame) -> Result<FlowField> {
        let (w, h, bs) = (a.width(), a.height(), self.block_size);
        if (w, h) != (b.width(), b.height()) {
            return Err(Error::DimensionMismatch(format!("flow frames {}x{} vs {}x{}", w, h, b.width(), b.height())));
        }
        if bs == 0 || w % bs != 0 || h % bs != 0 {
            return Err(Error::DimensionMismatch(format!("frame {w}x{h} not divisible into {bs}px blocks")));
        }
        let (rows, cols) = (h / bs, w / bs);
        let r = self.search_radius as i64;
        let mut vectors = Vec::with_capacity(rows * cols);
        for br in 0..rows {
            for bc in 0..cols {
                let (x0, y0) = ((bc * bs) as i64, (br * bs) as i64);
                // (sad, |v|^2, dy, dx), compared lexicographically
                let mut best = (u64::MAX, i64::MAX, i64::MAX, i64::MAX);
                for dy in -r..=r {
                    let ty = y0 + dy;
                    if ty < 0 || ty + bs as i64 > h as i64 {
                        continue;
                    }
                    for dx in -r..=r {
                        let tx = x0 + dx;
                        if tx < 0 || tx + bs as i64 > w as i64 {
                            continue;
                        }
                        let mut sad = 0u64;
                        for y in 0..bs {
                            let ra = &a.pixels()[(y0 as usize + y) * w + x0 as usize..][..bs];
                            let rb = &b.pixels()[(ty as usize + y) * w + tx as usize..][..bs];
                            sad += ra.iter().zip(rb).map(|(p, q)| p.abs_diff(*q) as u64).sum::<u64>();
                            if sad > best.0 {
                                break;
                            }
                        }
                        let cand = (sad, dx * dx + dy * dy, dy, dx);
                        if cand < best {
                            best = cand;
                        }
                    }
                }
                vectors.push((best.3 as i32, best.2 as i32));
            }
        }
        Ok(FlowField { block_size: bs, rows, cols, vectors })
    }
}

pub fn estimate_flow(a: &GreyFrame, b: &GreyFrame, cfg: &AkisConfig) -> Result<FlowField> {
    BlockMatcher { block_size: cfg.block_size, search_radius: cfg.search_radius }.estimate(a, b)
}

/// Blocks that intersect the union of the (non-degenerate) boxes.
pub fn box_mask(flow: &FlowField, boxes: &[BBox]) -> Vec<bool> {
    let bs = flow.block_size as f64;
    let mut mask = vec![false; flow.rows * flow.cols];
    for b in boxes.iter().filter(|b| b.is_valid() && !b.is_degenerate()) {
        for r in 0..flow.rows {
            let (top, bottom) = (r as f64 * bs, (r + 1) as f64 * bs);
            if !(top < b.y2 as f64 && bottom > b.y1 as f64) {
                continue;
            }
            for c in 0..flow.cols {
                let (left, right) = (c as f64 * bs, (c + 1) as f64 * bs);
                if left < b.x2 as f64 && right > b.x1 as f64 {
                    mask[r * flow.cols + c] = true;
                }
            }
        }
    }
    mask
}

/// Mean flow magnitude per pixel over the masked box region, with each
/// block's magnitude weighted by its pixel area. `None` when no block is
/// masked.
pub fn mean_box_flow(flow: &FlowField, boxes: &[BBox]) -> Option<f64> {
    let mask = box_mask(flow, boxes);
    let area_per_block = (flow.block_size * flow.block_size) as f64;
    let (mut total, mut area) = (0.0, 0.0);
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        total += magnitude(flow.vectors[i]) * area_per_block;
        area += area_per_block;
    }
    (area > 0.0).then(|| total / area)
}

/// One step of the interval controller: lengthen by one in calm scenes,
/// shorten by one in busy ones, stay put at the bounds, on an exact tie,
/// or when there are no boxes to measure.
pub fn next_interval(flow: &FlowField, key_boxes: &[BBox], k_r: u32, cfg: &AkisConfig) -> u32 {
    match mean_box_flow(flow, key_boxes) {
        Some(v) => step_interval(v, k_r, cfg),
        None => k_r,
    }
}

pub fn step_interval(mean_flow: f64, k_r: u32, cfg: &AkisConfig) -> u32 {
    if mean_flow < cfg.beta && k_r < cfg.k_upper {
        k_r + 1
    } else if mean_flow > cfg.beta && k_r > cfg.k_lower {
        k_r - 1
    } else {
        k_r
    }
}
