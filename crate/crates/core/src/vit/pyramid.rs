use serde::Serialize;

use super::params::Conv2x2;

/// Channel-last `rows x cols x channels` feature map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeatureMap {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(rows: usize, cols: usize, channels: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), rows * cols * channels, "feature map buffer size");
        Self { rows, cols, channels, data }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn cell(&self, r: usize, c: usize) -> &[f32] {
        let at = (r * self.cols + c) * self.channels;
        &self.data[at..at + self.channels]
    }

    /// `max |a - b| / max |b|` over all entries; 0 for two all-zero maps and
    /// infinite on shape mismatch.
    pub fn rel_diff(&self, other: &FeatureMap) -> f64 {
        if self.shape() != other.shape() {
            return f64::INFINITY;
        }
        rel_diff(&self.data, &other.data)
    }
}

pub fn rel_diff(a: &[f32], b: &[f32]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| (*y as f64).abs()).fold(0.0, f64::max);
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Four levels at 4x, 2x, 1x and 0.5x the token-grid resolution; with
/// 16-pixel patches that is 1/4, 1/8, 1/16 and 1/32 of the frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeaturePyramid {
    pub f1: FeatureMap,
    pub f2: FeatureMap,
    pub f3: FeatureMap,
    pub f4: FeatureMap,
}

impl FeaturePyramid {
    pub fn levels(&self) -> [&FeatureMap; 4] {
        [&self.f1, &self.f2, &self.f3, &self.f4]
    }

    pub fn rel_diff(&self, other: &FeaturePyramid) -> f64 {
        self.levels().iter().zip(other.levels()).map(|(a, b)| a.rel_diff(b)).fold(0.0, f64::max)
    }
}

/// Stride-2, kernel-2 transposed convolution: each input cell writes one
/// 2x2 output block, so the map doubles in each direction.
pub fn deconv2x2(x: &FeatureMap, k: &Conv2x2) -> FeatureMap {
    let d = x.channels;
    let (rows, cols) = (x.rows * 2, x.cols * 2);
    let mut out = vec![0.0f32; rows * cols * d];
    for r in 0..x.rows {
        for c in 0..x.cols {
            let input = x.cell(r, c);
            for ky in 0..2 {
                for kx in 0..2 {
                    let at = ((2 * r + ky) * cols + 2 * c + kx) * d;
                    let o = &mut out[at..at + d];
                    o.copy_from_slice(&k.bias);
                    let w = &k.weight[(ky * 2 + kx) * d * d..(ky * 2 + kx + 1) * d * d];
                    for (ci, &v) in input.iter().enumerate() {
                        for (ov, &wv) in o.iter_mut().zip(&w[ci * d..(ci + 1) * d]) {
                            *ov += v * wv;
                        }
                    }
                }
            }
        }
    }
    FeatureMap::new(rows, cols, d, out)
}

/// Stride-2, kernel-2 convolution: halves the map in each direction.
pub fn conv2x2(x: &FeatureMap, k: &Conv2x2) -> FeatureMap {
    let d = x.channels;
    let (rows, cols) = (x.rows / 2, x.cols / 2);
    let mut out = Vec::with_capacity(rows * cols * d);
    for r in 0..rows {
        for c in 0..cols {
            let mut o = k.bias.clone();
            for ky in 0..2 {
                for kx in 0..2 {
                    let input = x.cell(2 * r + ky, 2 * c + kx);
                    let w = &k.weight[(ky * 2 + kx) * d * d..(ky * 2 + kx + 1) * d * d];
                    for (ci, &v) in input.iter().enumerate() {
                        for (ov, &wv) in o.iter_mut().zip(&w[ci * d..(ci + 1) * d]) {
                            *ov += v * wv;
                        }
                    }
                }
            }
            out.extend_from_slice(&o);
        }
    }
    FeatureMap::new(rows, cols, d, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_kernel(d: usize) -> Conv2x2 {
        let mut weight = vec![0.0; 4 * d * d];
        for tap in 0..4 {
            for i in 0..d {
                weight[tap * d * d + i * d + i] = 1.0;
            }
        }
        Conv2x2 { weight, bias: vec![0.0; d] }
    }

    #[test]
    fn deconv_replicates_with_identity_taps() {
        let x = FeatureMap::new(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let y = deconv2x2(&x, &identity_kernel(2));
        assert_eq!(y.shape(), (2, 4, 2));
        assert_eq!(y.cell(1, 1), &[1.0, 2.0]);
        assert_eq!(y.cell(0, 3), &[3.0, 4.0]);
    }

    #[test]
    fn conv_sums_taps() {
        let x = FeatureMap::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let y = conv2x2(&x, &identity_kernel(1));
        assert_eq!(y.shape(), (1, 1, 1));
        assert_eq!(y.data, vec![10.0]);
    }

    #[test]
    fn rel_diff_cases() {
        assert_eq!(rel_diff(&[0.0], &[0.0]), 0.0);
        assert_eq!(rel_diff(&[1.0, 2.0], &[1.0, 4.0]), 0.5);
        assert!(rel_diff(&[1.0], &[0.0]).is_infinite());
    }
}
