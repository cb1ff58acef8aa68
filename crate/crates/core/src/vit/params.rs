//! Parameter tensors and their canonical order.
//!
//! Every tensor is visited in one fixed order, used both for seeded
//! initialization and for the weights file. Seeded initialization draws each
//! scalar in that order from `U[-1/sqrt(D), 1/sqrt(D))`; layer-norm gains are
//! stored as `1 + draw` so a fresh model starts close to the identity
//! normalization. Matrices are row-major `in x out`.
//!
//! Order:
//! 1. patch projection weight `3P^2 x D`, bias `D`
//! 2. positional table `N x D`
//! 3. per encoder block: ln1 gain/bias, attention (q, k, v, out: weight
//!    `D x D` then bias `D`, each), ln2 gain/bias, fc1 `D x rD` + bias,
//!    fc2 `rD x D` + bias
//! 4. reconstruction decoder: self-attention ln + attention, query ln,
//!    memory ln, cross-attention, mlp ln, fc1, fc2
//! 5. f1 transposed convs (two), f2 transposed conv, f4 conv: each weight
//!    `2 x 2 x D x D` (ky, kx, in, out) then bias `D`
//! 6. objectness head weight `D`, bias `1`

use super::config::EngineConfig;
use crate::rng::XorShift64Star;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Plain,
    NormGain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub d_in: usize,
}

impl Linear {
    fn zeros(d_in: usize, d_out: usize) -> Self {
        Self { weight: vec![0.0; d_in * d_out], bias: vec![0.0; d_out], d_in }
    }

    pub fn forward(&self, x: &[f32], rows: usize) -> Vec<f32> {
        super::ops::linear(x, rows, self.d_in, &self.weight, &self.bias)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut [f32], TensorKind)) {
        f(&mut self.weight, TensorKind::Plain);
        f(&mut self.bias, TensorKind::Plain);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Vec<f32>,
    pub bias: Vec<f32>,
}

impl LayerNorm {
    fn new(dim: usize) -> Self {
        Self { gain: vec![1.0; dim], bias: vec![0.0; dim] }
    }

    pub fn forward(&self, x: &[f32]) -> Vec<f32> {
        super::ops::layer_norm(x, self.gain.len(), &self.gain, &self.bias)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut [f32], TensorKind)) {
        f(&mut self.gain, TensorKind::NormGain);
        f(&mut self.bias, TensorKind::Plain);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl Attention {
    fn new(dim: usize) -> Self {
        Self { q: Linear::zeros(dim, dim), k: Linear::zeros(dim, dim), v: Linear::zeros(dim, dim), out: Linear::zeros(dim, dim) }
    }

    /// Multi-head attention of `queries` over `memory`; returns the projected
    /// output and the number of query-key pairs scored.
    pub fn forward(&self, queries: &[f32], memory: &[f32], dim: usize, heads: usize) -> (Vec<f32>, u64) {
        let nq = queries.len() / dim;
        let nk = memory.len() / dim;
        let q = self.q.forward(queries, nq);
        let k = self.k.forward(memory, nk);
        let v = self.v.forward(memory, nk);
        let (mixed, entries) = super::ops::scaled_dot_attention(&q, &k, &v, dim, heads);
        (self.out.forward(&mixed, nq), entries)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut [f32], TensorKind)) {
        self.q.visit(f);
        self.k.visit(f);
        self.v.visit(f);
        self.out.visit(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Mlp {
    fn new(dim: usize, hidden: usize) -> Self {
        Self { fc1: Linear::zeros(dim, hidden), fc2: Linear::zeros(hidden, dim) }
    }

    pub fn forward(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let mut h = self.fc1.forward(x, rows);
        super::ops::gelu_inplace(&mut h);
        self.fc2.forward(&h, rows)
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut [f32], TensorKind)) {
        self.fc1.visit(f);
        self.fc2.visit(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoder {
    pub ln_self: LayerNorm,
    pub self_attn: Attention,
    pub ln_query: LayerNorm,
    pub ln_memory: LayerNorm,
    pub cross_attn: Attention,
    pub ln_mlp: LayerNorm,
    pub mlp: Mlp,
}

/// 2x2, stride-2 (transposed) convolution between `D`-channel maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2x2 {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Conv2x2 {
    fn new(dim: usize) -> Self {
        Self { weight: vec![0.0; 4 * dim * dim], bias: vec![0.0; dim] }
    }

    fn visit(&mut self, f: &mut dyn FnMut(&mut [f32], TensorKind)) {
        f(&mut self.weight, TensorKind::Plain);
        f(&mut self.bias, TensorKind::Plain);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub patch_embed: Linear,
    pub pos_embed: Vec<f32>,
    pub blocks: Vec<EncoderBlock>,
    pub decoder: Decoder,
    pub deconv1a: Conv2x2,
    pub deconv1b: Conv2x2,
    pub deconv2: Conv2x2,
    pub conv4: Conv2x2,
    pub head: Linear,
}

impl Weights {
    /// Correctly shaped, identity-normalized, otherwise zero parameters.
    pub fn zeros(cfg: &EngineConfig) -> Self {
        let d = cfg.embed_dim;
        let hidden = cfg.hidden_dim();
        let blocks = (0..cfg.depth)
            .map(|_| EncoderBlock { ln1: LayerNorm::new(d), attn: Attention::new(d), ln2: LayerNorm::new(d), mlp: Mlp::new(d, hidden) })
            .collect();
        Self {
            patch_embed: Linear::zeros(cfg.patch_input_len(), d),
            pos_embed: vec![0.0; cfg.num_patches() * d],
            blocks,
            decoder: Decoder {
                ln_self: LayerNorm::new(d),
                self_attn: Attention::new(d),
                ln_query: LayerNorm::new(d),
                ln_memory: LayerNorm::new(d),
                cross_attn: Attention::new(d),
                ln_mlp: LayerNorm::new(d),
                mlp: Mlp::new(d, hidden),
            },
            deconv1a: Conv2x2::new(d),
            deconv1b: Conv2x2::new(d),
            deconv2: Conv2x2::new(d),
            conv4: Conv2x2::new(d),
            head: Linear::zeros(d, 1),
        }
    }

    pub fn seeded(cfg: &EngineConfig) -> Self {
        let mut w = Self::zeros(cfg);
        let bound = 1.0 / (cfg.embed_dim as f32).sqrt();
        let mut rng = XorShift64Star::new(cfg.weight_seed);
        w.visit(&mut |t, kind| {
            for v in t.iter_mut() {
                let draw = rng.uniform_f32(-bound, bound);
                *v = match kind {
                    TensorKind::Plain => draw,
                    TensorKind::NormGain => 1.0 + draw,
                };
            }
        });
        w
    }

    /// Visits every tensor in canonical order.
    pub fn visit(&mut self, f: &mut dyn FnMut(&mut [f32], TensorKind)) {
        self.patch_embed.visit(f);
        f(&mut self.pos_embed, TensorKind::Plain);
        for b in &mut self.blocks {
            b.ln1.visit(f);
            b.attn.visit(f);
            b.ln2.visit(f);
            b.mlp.visit(f);
        }
        let dec = &mut self.decoder;
        dec.ln_self.visit(f);
        dec.self_attn.visit(f);
        dec.ln_query.visit(f);
        dec.ln_memory.visit(f);
        dec.cross_attn.visit(f);
        dec.ln_mlp.visit(f);
        dec.mlp.visit(f);
        self.deconv1a.visit(f);
        self.deconv1b.visit(f);
        self.deconv2.visit(f);
        self.conv4.visit(f);
        self.head.visit(f);
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.clone().visit(&mut |t, _| n += t.len());
        n
    }

    pub fn flatten(&self) -> Vec<f32> {
        let mut out = Vec::new();
        self.clone().visit(&mut |t, _| out.extend_from_slice(t));
        out
    }

    /// Fills tensors from `flat` in canonical order; `flat` must hold
    /// exactly `param_count` values.
    pub fn load_flat(&mut self, flat: &[f32]) -> bool {
        if flat.len() != self.param_count() {
            return false;
        }
        let mut at = 0;
        self.visit(&mut |t, _| {
            t.copy_from_slice(&flat[at..at + t.len()]);
            at += t.len();
        });
        true
    }
}
