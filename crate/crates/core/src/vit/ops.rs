//! Dense f32 kernels on row-major buffers.

/// `y = x W + b` for `rows` inputs of width `d_in`; `w` is `d_in x d_out`.
pub fn linear(x: &[f32], rows: usize, d_in: usize, w: &[f32], b: &[f32]) -> Vec<f32> {
    let d_out = b.len();
    debug_assert_eq!(x.len(), rows * d_in);
    debug_assert_eq!(w.len(), d_in * d_out);
    let mut y = Vec::with_capacity(rows * d_out);
    for r in 0..rows {
        y.extend_from_slice(b);
        let out = &mut y[r * d_out..(r + 1) * d_out];
        for (k, &xv) in x[r * d_in..(r + 1) * d_in].iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let wrow = &w[k * d_out..(k + 1) * d_out];
            for (o, &wv) in out.iter_mut().zip(wrow) {
                *o += xv * wv;
            }
        }
    }
    y
}

pub const LN_EPS: f32 = 1e-5;

pub fn layer_norm(x: &[f32], dim: usize, gain: &[f32], bias: &[f32]) -> Vec<f32> {
    let mut y = Vec::with_capacity(x.len());
    for row in x.chunks_exact(dim) {
        let mean = row.iter().sum::<f32>() / dim as f32;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / dim as f32;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        y.extend(row.iter().zip(gain.iter().zip(bias)).map(|(v, (g, b))| (v - mean) * inv * g + b));
    }
    y
}

/// Tanh approximation of GELU.
pub fn gelu(v: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2 / pi)
    0.5 * v * (1.0 + (C * (v + 0.044_715 * v * v * v)).tanh())
}

pub fn gelu_inplace(x: &mut [f32]) {
    x.iter_mut().for_each(|v| *v = gelu(*v));
}

pub fn softmax_inplace(x: &mut [f32]) {
    let max = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    x.iter_mut().for_each(|v| *v /= sum);
}

pub fn add_inplace(acc: &mut [f32], x: &[f32]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Scaled dot-product attention split over `heads`. `q` is `nq x dim`,
/// `k` and `v` are `nk x dim`. Returns the concatenated head outputs
/// (`nq x dim`) and the number of query-key score entries evaluated.
pub fn scaled_dot_attention(q: &[f32], k: &[f32], v: &[f32], dim: usize, heads: usize) -> (Vec<f32>, u64) {
    let nq = q.len() / dim;
    let nk = k.len() / dim;
    let hd = dim / heads;
    let scale = 1.0 / (hd as f32).sqrt();
    let mut out = vec![0.0f32; nq * dim];
    let mut scores = vec![0.0f32; nk];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..nq {
            let qi = &q[i * dim + off..i * dim + off + hd];
            for (j, s) in scores.iter_mut().enumerate() {
                let kj = &k[j * dim + off..j * dim + off + hd];
                *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f32>() * scale;
            }
            softmax_inplace(&mut scores);
            let oi = &mut out[i * dim + off..i * dim + off + hd];
            for (j, &p) in scores.iter().enumerate() {
                let vj = &v[j * dim + off..j * dim + off + hd];
                for (o, &vv) in oi.iter_mut().zip(vj) {
                    *o += p * vv;
                }
            }
        }
    }
    (out, (nq * nk) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_hand_product() {
        // [1 2] * [[1 2 3] [4 5 6]] + [1 1 1] = [10 13 16]
        let y = linear(&[1.0, 2.0], 1, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], &[1.0, 1.0, 1.0]);
        assert_eq!(y, vec![10.0, 13.0, 16.0]);
    }

    #[test]
    fn layer_norm_normalizes() {
        let y = layer_norm(&[1.0, 2.0, 3.0, 4.0], 4, &[1.0; 4], &[0.0; 4]);
        let mean: f32 = y.iter().sum::<f32>() / 4.0;
        let var: f32 = y.iter().map(|v| v * v).sum::<f32>() / 4.0;
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-3);
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut x = [1.0, 2.0, 3.0, 1000.0];
        softmax_inplace(&mut x);
        assert!((x.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        assert!(x[3] > 0.999);
    }

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_192).abs() < 1e-5);
        assert!((gelu(-1.0) + 0.158_808).abs() < 1e-5);
    }

    #[test]
    fn attention_counts_entries() {
        let q = vec![0.5f32; 3 * 4];
        let k = vec![0.25f32; 5 * 4];
        let (out, n) = scaled_dot_attention(&q, &k, &k, 4, 2);
        assert_eq!(n, 15);
        assert!(out.iter().all(|v| (v - 0.25).abs() < 1e-6));
    }
}
