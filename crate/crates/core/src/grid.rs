//! Patch-grid geometry: frame/patch conversion, box-to-grid alignment and
//! per-patch frame differences.

use crate::error::{Error, Result};
use crate::model::{BBox, Frame, GreyFrame, PatchGrid, PoiSet};

/// Grid-aligned rectangle in pixels. Coordinates may fall outside the frame
/// until [`expand_poi`] clamps them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridRect {
    pub x1: i64,
    pub y1: i64,
    pub x2: i64,
    pub y2: i64,
}

impl GridRect {
    pub fn new(x1: i64, y1: i64, x2: i64, y2: i64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn is_empty(&self) -> bool {
        self.x1 >= self.x2 || self.y1 >= self.y2
    }

    pub fn contains_rect(&self, other: &GridRect) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && self.x2 >= other.x2 && self.y2 >= other.y2
    }
}

/// Sum of absolute greyscale differences per patch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchDiffMap {
    pub grid: PatchGrid,
    pub sums: Vec<u64>,
}

fn check_frame(grid: &PatchGrid, width: usize, height: usize) -> Result<()> {
    if !grid.matches(width, height) {
        return Err(Error::DimensionMismatch(format!(
            "frame {width}x{height} vs grid {}x{} of {}px patches",
            grid.width(),
            grid.height(),
            grid.patch_size
        )));
    }
    Ok(())
}

/// Copies patch `index` out of `frame`, row-major within the patch.
pub fn extract_patch(frame: &Frame, grid: &PatchGrid, index: usize) -> Result<Vec<u8>> {
    check_frame(grid, frame.width(), frame.height())?;
    if index >= grid.count() {
        return Err(Error::IndexOutOfRange { index, count: grid.count() });
    }
    let p = grid.patch_size;
    let c = frame.channels();
    let (row, col) = grid.row_col(index);
    let stride = frame.width() * c;
    let mut block = Vec::with_capacity(grid.block_len(c));
    for y in row * p..(row + 1) * p {
        let start = y * stride + col * p * c;
        block.extend_from_slice(&frame.pixels()[start..start + p * c]);
    }
    Ok(block)
}

/// Patches for a set of indices, in index order.
pub fn extract_patches(frame: &Frame, poi: &PoiSet) -> Result<Vec<Vec<u8>>> {
    poi.indices().iter().map(|&i| extract_patch(frame, &poi.grid(), i)).collect()
}

/// Splits a frame into `N` blocks of `P*P*C` bytes, patches ordered row-major.
pub fn patchify(frame: &Frame, grid: &PatchGrid) -> Result<Vec<Vec<u8>>> {
    (0..grid.count()).map(|i| extract_patch(frame, grid, i)).collect()
}

/// Inverse of [`patchify`].
pub fn unpatchify(blocks: &[Vec<u8>], grid: &PatchGrid, channels: usize, frame_id: u64) -> Result<Frame> {
    if blocks.len() != grid.count() {
        return Err(Error::DimensionMismatch(format!("{} blocks for {} patches", blocks.len(), grid.count())));
    }
    let p = grid.patch_size;
    let stride = grid.width() * channels;
    let mut pixels = vec![0u8; stride * grid.height()];
    for (index, block) in blocks.iter().enumerate() {
        if block.len() != grid.block_len(channels) {
            return Err(Error::DimensionMismatch(format!(
                "block {index} has {} bytes, expected {}",
                block.len(),
                grid.block_len(channels)
            )));
        }
        let (row, col) = grid.row_col(index);
        for (dy, line) in block.chunks_exact(p * channels).enumerate() {
            let start = (row * p + dy) * stride + col * p * channels;
            pixels[start..start + p * channels].copy_from_slice(line);
        }
    }
    Frame::new(frame_id, grid.width(), grid.height(), channels, pixels)
}

/// Snaps a box outward onto the patch grid. The far edges always extend one
/// patch past `floor(x2 / P)`, even when `x2` already sits on a grid line.
pub fn bbox_to_poi(b: &BBox, patch_size: usize) -> GridRect {
    let p = patch_size as f64;
    let snap = |v: f32| (v as f64 / p).floor() as i64;
    let ps = patch_size as i64;
    GridRect {
        x1: snap(b.x1) * ps,
        y1: snap(b.y1) * ps,
        x2: (snap(b.x2) + 1) * ps,
        y2: (snap(b.y2) + 1) * ps,
    }
}

/// Moves every edge outward by `margin` patches, then clamps to the frame.
pub fn expand_poi(r: &GridRect, margin: usize, frame_w: usize, frame_h: usize, patch_size: usize) -> GridRect {
    let d = (margin * patch_size) as i64;
    GridRect {
        x1: (r.x1 - d).max(0),
        y1: (r.y1 - d).max(0),
        x2: (r.x2 + d).min(frame_w as i64),
        y2: (r.y2 + d).min(frame_h as i64),
    }
}

/// Indices of every patch whose area overlaps the interior of `r`.
pub fn rect_to_indices(r: &GridRect, grid: &PatchGrid) -> PoiSet {
    if r.is_empty() {
        return PoiSet::empty(*grid);
    }
    let p = grid.patch_size as i64;
    let span = |lo: i64, hi: i64, cells: usize| {
        let first = lo.div_euclid(p).max(0);
        let last = (hi + p - 1).div_euclid(p).min(cells as i64);
        first..last.max(first)
    };
    let cols = span(r.x1, r.x2, grid.cols);
    let rows = span(r.y1, r.y2, grid.rows);
    let mut indices = Vec::with_capacity((cols.end - cols.start) as usize * (rows.end - rows.start) as usize);
    for row in rows {
        for col in cols.clone() {
            indices.push(grid.index(row as usize, col as usize));
        }
    }
    PoiSet::new(*grid, indices).expect("indices clipped to grid")
}

/// Per-patch sum of `|curr - prev|`.
pub fn patch_pixel_diff(prev: &GreyFrame, curr: &GreyFrame, grid: &PatchGrid) -> Result<PatchDiffMap> {
    check_frame(grid, prev.width(), prev.height())?;
    check_frame(grid, curr.width(), curr.height())?;
    let p = grid.patch_size;
    let w = grid.width();
    let mut sums = vec![0u64; grid.count()];
    for (y, (a_row, b_row)) in prev.pixels().chunks_exact(w).zip(curr.pixels().chunks_exact(w)).enumerate() {
        let row = y / p;
        for (x, (&a, &b)) in a_row.iter().zip(b_row).enumerate() {
            sums[row * grid.cols + x / p] += a.abs_diff(b) as u64;
        }
    }
    Ok(PatchDiffMap { grid: *grid, sums })
}
