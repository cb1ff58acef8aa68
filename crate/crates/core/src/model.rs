//! Shared domain types and pixel-level primitives.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A raw 8-bit raster, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    frame_id: u64,
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Frame {
    pub fn new(frame_id: u64, width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidFrame(format!("channels must be 1 or 3, got {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidFrame(format!("empty frame {width}x{height}")));
        }
        let expected = width * height * channels;
        if pixels.len() != expected {
            return Err(Error::InvalidFrame(format!(
                "pixel buffer holds {} bytes, {width}x{height}x{channels} needs {expected}",
                pixels.len()
            )));
        }
        Ok(Self { frame_id, width, height, channels, pixels })
    }

    pub fn filled(frame_id: u64, width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(frame_id, width, height, channels, vec![value; width * height * channels])
    }

    pub fn frame_id(&self) -> u64 {
        self.frame_id
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn with_id(mut self, frame_id: u64) -> Self {
        self.frame_id = frame_id;
        self
    }

    pub fn byte_len(&self) -> usize {
        self.pixels.len()
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let at = (y * self.width + x) * self.channels;
        &self.pixels[at..at + self.channels]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GreyFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidFrame(format!(
                "grey buffer holds {} bytes, {width}x{height} needs {}",
                pixels.len(),
                width * height
            )));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// BT.601 luma with round-half-up: `(299 R + 587 G + 114 B + 500) / 1000`.
///
/// Integer arithmetic is exact here because the coefficients are whole
/// thousandths, so the result never depends on float rounding.
pub fn to_grayscale(frame: &Frame) -> GreyFrame {
    let pixels = match frame.channels {
        1 => frame.pixels.clone(),
        _ => frame
            .pixels
            .chunks_exact(3)
            .map(|px| {
                let y = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
                ((y + 500) / 1000).min(255) as u8
            })
            .collect(),
    };
    GreyFrame { width: frame.width, height: frame.height, pixels }
}

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x1: f32,
    pub y1: f32,
    pub x2: f32,
    pub y2: f32,
}

impl BBox {
    pub fn new(x1: f32, y1: f32, x2: f32, y2: f32) -> Result<Self> {
        let b = Self { x1, y1, x2, y2 };
        if !b.is_valid() {
            return Err(Error::InvalidBox(format!("({x1}, {y1}, {x2}, {y2})")));
        }
        Ok(b)
    }

    /// `(x, y, w, h)` as used by MOT-style annotations.
    pub fn from_xywh(x: f32, y: f32, w: f32, h: f32) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite()) && self.x1 <= self.x2 && self.y1 <= self.y2
    }

    pub fn width(&self) -> f64 {
        self.x2 as f64 - self.x1 as f64
    }
    pub fn height(&self) -> f64 {
        self.y2 as f64 - self.y1 as f64
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn is_degenerate(&self) -> bool {
        self.area() <= 0.0
    }
}

/// Intersection over union; 0 when the union has no area.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) as f64 - a.x1.max(b.x1) as f64).max(0.0);
    let ih = (a.y2.min(b.y2) as f64 - a.y1.max(b.y1) as f64).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub score: f32,
    pub class_id: u16,
}

impl Detection {
    pub fn new(bbox: BBox, score: f32, class_id: u16) -> Result<Self> {
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidBox(format!("score {score} outside [0, 1]")));
        }
        if !bbox.is_valid() {
            return Err(Error::InvalidBox(format!("{bbox:?}")));
        }
        Ok(Self { bbox, score, class_id })
    }
}

/// Square, non-overlapping tiling of a `W x H` frame into `P x P` patches,
/// indexed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchGrid {
    pub patch_size: usize,
    pub cols: usize,
    pub rows: usize,
}

impl PatchGrid {
    pub fn new(width: usize, height: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 {
            return Err(Error::InvalidConfig("patch size must be positive".into()));
        }
        if width == 0 || height == 0 || width % patch_size != 0 || height % patch_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "frame {width}x{height} is not divisible into {patch_size}px patches"
            )));
        }
        Ok(Self { patch_size, cols: width / patch_size, rows: height / patch_size })
    }

    pub fn for_frame(frame: &Frame, patch_size: usize) -> Result<Self> {
        Self::new(frame.width(), frame.height(), patch_size)
    }

    pub fn count(&self) -> usize {
        self.rows * self.cols
    }
    pub fn width(&self) -> usize {
        self.cols * self.patch_size
    }
    pub fn height(&self) -> usize {
        self.rows * self.patch_size
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Bytes in one patch block for `channels`-channel frames.
    pub fn block_len(&self, channels: usize) -> usize {
        self.patch_size * self.patch_size * channels
    }

    pub fn matches(&self, width: usize, height: usize) -> bool {
        self.width() == width && self.height() == height
    }
}

/// Sorted, duplicate-free set of patch indices on a grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoiSet {
    grid: PatchGrid,
    indices: Vec<usize>,
}

impl PoiSet {
    pub fn new(grid: PatchGrid, mut indices: Vec<usize>) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&last) = indices.last() {
            if last >= grid.count() {
                return Err(Error::IndexOutOfRange { index: last, count: grid.count() });
            }
        }
        Ok(Self { grid, indices })
    }

    pub fn empty(grid: PatchGrid) -> Self {
        Self { grid, indices: Vec::new() }
    }

    pub fn full(grid: PatchGrid) -> Self {
        Self { grid, indices: (0..grid.count()).collect() }
    }

    pub fn grid(&self) -> PatchGrid {
        self.grid
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn union(&self, other: &PoiSet) -> PoiSet {
        let mut indices = self.indices.clone();
        indices.extend_from_slice(&other.indices);
        indices.sort_unstable();
        indices.dedup();
        PoiSet { grid: self.grid, indices }
    }

    /// Fraction of the grid covered.
    pub fn proportion(&self) -> f64 {
        self.indices.len() as f64 / self.grid.count() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rgb(r: u8, g: u8, b: u8) -> Frame {
        Frame::new(0, 1, 1, 3, vec![r, g, b]).unwrap()
    }

    #[test]
    fn grayscale_examples() {
        let zero = Frame::filled(0, 4, 4, 3, 0).unwrap();
        assert!(to_grayscale(&zero).pixels().iter().all(|&p| p == 0));
        assert_eq!(to_grayscale(&rgb(255, 255, 255)).pixels(), &[255]);
        assert_eq!(to_grayscale(&rgb(100, 200, 50)).pixels(), &[153]);
    }

    #[test]
    fn grayscale_rounds_half_up() {
        // 0.114 * 250 = 28.5 exactly.
        assert_eq!(to_grayscale(&rgb(0, 0, 250)).pixels(), &[29]);
        // 0.299 * 5 = 1.495
        assert_eq!(to_grayscale(&rgb(5, 0, 0)).pixels(), &[1]);
        assert_eq!(to_grayscale(&rgb(1, 0, 0)).pixels(), &[0]);
    }

    #[test]
    fn grayscale_single_channel_passthrough() {
        let f = Frame::new(3, 2, 2, 1, vec![0, 64, 128, 255]).unwrap();
        let g = to_grayscale(&f);
        assert_eq!(g.pixels(), f.pixels());
        let again = to_grayscale(&Frame::new(3, 2, 2, 1, g.pixels().to_vec()).unwrap());
        assert_eq!(again, g);
    }

    #[test]
    fn frame_rejects_bad_buffers() {
        assert!(Frame::new(0, 2, 2, 3, vec![0; 11]).is_err());
        assert!(Frame::new(0, 2, 2, 2, vec![0; 8]).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20.0, 20.0, 30.0, 30.0).unwrap()), 0.0);
        let c = BBox::new(5.0, 0.0, 15.0, 10.0).unwrap();
        assert!((iou(&a, &c) - 1.0 / 3.0).abs() < 1e-12);
        let flat = BBox::new(3.0, 3.0, 3.0, 3.0).unwrap();
        assert_eq!(iou(&flat, &flat), 0.0);
        assert_eq!(iou(&flat, &a), 0.0);
    }

    #[test]
    fn bbox_validation() {
        assert!(BBox::new(2.0, 0.0, 1.0, 1.0).is_err());
        assert!(BBox::new(f32::NAN, 0.0, 1.0, 1.0).is_err());
        assert_eq!(BBox::from_xywh(912.0, 484.0, 97.0, 109.0).unwrap(), BBox { x1: 912.0, y1: 484.0, x2: 1009.0, y2: 593.0 });
    }

    #[test]
    fn grid_mapping() {
        let g = PatchGrid::new(64, 32, 16).unwrap();
        assert_eq!((g.cols, g.rows, g.count()), (4, 2, 8));
        assert_eq!(g.row_col(5), (1, 1));
        assert_eq!(g.index(1, 3), 7);
        assert!(PatchGrid::new(60, 32, 16).is_err());
    }

    #[test]
    fn poi_set_sorts_and_dedups() {
        let g = PatchGrid::new(32, 32, 16).unwrap();
        let s = PoiSet::new(g, vec![3, 1, 3, 0]).unwrap();
        assert_eq!(s.indices(), &[0, 1, 3]);
        assert!(matches!(PoiSet::new(g, vec![4]), Err(Error::IndexOutOfRange { index: 4, count: 4 })));
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0f32..100.0, 0f32..100.0, 0f32..50.0, 0f32..50.0)
            .prop_map(|(x, y, w, h)| BBox { x1: x, y1: y, x2: x + w, y2: y + h })
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if ab == 1.0 {
                prop_assert!(a.area() > 0.0);
                prop_assert!((a.area() - b.area()).abs() < 1e-6 * a.area().max(1.0));
            }
        }

        #[test]
        fn iou_identity_with_positive_area(a in arb_box()) {
            if a.area() > 0.0 {
                prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
            } else {
                prop_assert_eq!(iou(&a, &a), 0.0);
            }
        }
    }
}
