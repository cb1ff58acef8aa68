use super::config::{EngineConfig, ENGINE_CHANNELS};
use super::ops::{add_inplace, gelu_inplace};
use super::params::Weights;
use super::pyramid::{conv2x2, deconv2x2, FeatureMap, FeaturePyramid};
use super::tokens::{MemoryTokenPools, TokenSequence};
use crate::error::{Error, Result};
use crate::grid::patchify;
use crate::model::{Frame, PoiSet};

/// Immutable backbone: configuration plus weights. Shared read-only between
/// sessions; per-session state lives in [`MemoryTokenPools`].
#[derive(Debug, Clone, PartialEq)]
pub struct Engine {
    cfg: EngineConfig,
    weights: Weights,
}

/// Output of one inference call.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub pyramid: FeaturePyramid,
    /// Query-key score entries computed in each encoder layer.
    pub encoder_attention_entries: Vec<u64>,
    /// Tokens that went through the encoder.
    pub tokens_encoded: usize,
}

impl Engine {
    pub fn new(cfg: EngineConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { weights: Weights::seeded(&cfg), cfg })
    }

    pub fn with_weights(cfg: EngineConfig, weights: Weights) -> Result<Self> {
        cfg.validate()?;
        let expected = Weights::zeros(&cfg).param_count();
        if weights.param_count() != expected {
            return Err(Error::Weights(format!("{} parameters supplied, config needs {expected}", weights.param_count())));
        }
        Ok(Self { cfg, weights })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Weights {
        &mut self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    /// Linear patch projection of `/255`-scaled pixels. No positional
    /// embedding and no class token. Single-channel blocks are replicated
    /// across the three input channels.
    pub fn embed_patches<B: AsRef<[u8]>>(&self, patches: &[B], indices: &[usize]) -> Result<TokenSequence> {
        if patches.len() != indices.len() {
            return Err(Error::DimensionMismatch(format!("{} patches for {} indices", patches.len(), indices.len())));
        }
        let n = self.cfg.num_patches();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::IndexOutOfRange { index: bad, count: n });
        }
        let pp = self.cfg.patch_size * self.cfg.patch_size;
        let d_in = self.cfg.patch_input_len();
        let mut x = Vec::with_capacity(patches.len() * d_in);
        for (i, block) in patches.iter().enumerate() {
            let block = block.as_ref();
            if block.len() == pp * ENGINE_CHANNELS {
                x.extend(block.iter().map(|&b| b as f32 / 255.0));
            } else if block.len() == pp {
                x.extend(block.iter().flat_map(|&b| [b as f32 / 255.0; ENGINE_CHANNELS]));
            } else {
                return Err(Error::DimensionMismatch(format!(
                    "patch {i} has {} bytes, expected {} or {}",
                    block.len(),
                    pp,
                    pp * ENGINE_CHANNELS
                )));
            }
        }
        let data = self.weights.patch_embed.forward(&x, patches.len());
        TokenSequence::new(indices.to_vec(), self.cfg.embed_dim, data)
    }

    /// Adds the positional row of each token's original frame position.
    pub fn add_positional(&self, ts: &TokenSequence) -> Result<TokenSequence> {
        let d = self.cfg.embed_dim;
        let n = self.cfg.num_patches();
        let mut out = ts.clone();
        for (r, &index) in ts.indices().iter().enumerate() {
            if index >= n {
                return Err(Error::IndexOutOfRange { index, count: n });
            }
            add_inplace(&mut out.data_mut()[r * d..(r + 1) * d], &self.weights.pos_embed[index * d..(index + 1) * d]);
        }
        Ok(out)
    }

    /// Pre-norm transformer encoder over exactly the tokens given.
    /// Returns the encoded sequence and the attention entries per layer.
    pub fn encode(&self, ts: &TokenSequence) -> (TokenSequence, Vec<u64>) {
        let d = self.cfg.embed_dim;
        let rows = ts.len();
        let mut z = ts.data().to_vec();
        let mut entries = Vec::with_capacity(self.cfg.depth);
        for block in &self.weights.blocks {
            if rows == 0 {
                entries.push(0);
                continue;
            }
            let normed = block.ln1.forward(&z);
            let (attn, count) = block.attn.forward(&normed, &normed, d, self.cfg.heads);
            entries.push(count);
            add_inplace(&mut z, &attn);
            let normed = block.ln2.forward(&z);
            let mlp = block.mlp.forward(&normed, rows);
            add_inplace(&mut z, &mlp);
        }
        (ts.with_data(z), entries)
    }

    /// Reconstruction decoder: self-attention over the post-encoder
    /// tokens, cross-attention into the pre-encoder tokens, then an MLP,
    /// each pre-norm with a residual. Reshaped onto the token grid.
    pub fn mfr(&self, z_full: &TokenSequence, z0_full: &TokenSequence) -> Result<FeatureMap> {
        let n = self.cfg.num_patches();
        for (name, s) in [("post-encoder", z_full), ("pre-encoder", z0_full)] {
            if !s.is_full(n) || s.dim() != self.cfg.embed_dim {
                return Err(Error::DimensionMismatch(format!("{name} sequence must hold all {n} tokens in order")));
            }
        }
        let d = self.cfg.embed_dim;
        let h = self.cfg.heads;
        let dec = &self.weights.decoder;
        let mut x = z_full.data().to_vec();
        let normed = dec.ln_self.forward(&x);
        add_inplace(&mut x, &dec.self_attn.forward(&normed, &normed, d, h).0);
        let queries = dec.ln_query.forward(&x);
        let memory = dec.ln_memory.forward(z0_full.data());
        add_inplace(&mut x, &dec.cross_attn.forward(&queries, &memory, d, h).0);
        let normed = dec.ln_mlp.forward(&x);
        add_inplace(&mut x, &dec.mlp.forward(&normed, n));
        let grid = self.cfg.grid();
        Ok(FeatureMap::new(grid.rows, grid.cols, d, x))
    }

    fn pyramid(&self, z0_full: &TokenSequence, f3: FeatureMap) -> FeaturePyramid {
        let grid = self.cfg.grid();
        let base = FeatureMap::new(grid.rows, grid.cols, self.cfg.embed_dim, z0_full.data().to_vec());
        let w = &self.weights;
        let mut up = deconv2x2(&base, &w.deconv1a);
        gelu_inplace(&mut up.data);
        let f1 = deconv2x2(&up, &w.deconv1b);
        let f2 = deconv2x2(&base, &w.deconv2);
        let f4 = conv2x2(&f3, &w.conv4);
        FeaturePyramid { f1, f2, f3, f4 }
    }

    /// Full-frame inference; re-initializes both pools.
    pub fn keyframe_infer(&self, frame: &Frame, pools: &mut MemoryTokenPools) -> Result<Inference> {
        let grid = self.cfg.grid();
        if !grid.matches(frame.width(), frame.height()) {
            return Err(Error::DimensionMismatch(format!(
                "frame {}x{} vs engine {}x{}",
                frame.width(),
                frame.height(),
                self.cfg.frame_w,
                self.cfg.frame_h
            )));
        }
        let blocks = patchify(frame, &grid)?;
        let indices: Vec<usize> = (0..grid.count()).collect();
        let z0_tilde = self.embed_patches(&blocks, &indices)?;
        let z0 = self.add_positional(&z0_tilde)?;
        let (z_l, entries) = self.encode(&z0);
        let f3 = self.mfr(&z_l, &z0_tilde)?;
        let pyramid = self.pyramid(&z0_tilde, f3);
        pools.replace(z0_tilde, z_l);
        Ok(Inference { pyramid, encoder_attention_entries: entries, tokens_encoded: grid.count() })
    }

    /// Sparse inference: encodes only the received patches, splices them into
    /// the pools at their frame positions, rebuilds the pyramid and writes the
    /// spliced sequences back to the pools.
    pub fn nonkeyframe_infer<B: AsRef<[u8]>>(&self, patches: &[B], poi: &PoiSet, pools: &mut MemoryTokenPools) -> Result<Inference> {
        let (pool_a, pool_b) = match (pools.pre_encoder(), pools.post_encoder()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::PoolsUninitialized),
        };
        if poi.grid() != self.cfg.grid() {
            return Err(Error::DimensionMismatch("PoI grid differs from the engine grid".into()));
        }
        let sparse0_tilde = self.embed_patches(patches, poi.indices())?;
        let sparse0 = self.add_positional(&sparse0_tilde)?;
        let (sparse_l, entries) = self.encode(&sparse0);
        let z0_full = pool_a.splice(&sparse0_tilde)?;
        let z_l_full = pool_b.splice(&sparse_l)?;
        let f3 = self.mfr(&z_l_full, &z0_full)?;
        let pyramid = self.pyramid(&z0_full, f3);
        pools.replace(z0_full, z_l_full);
        Ok(Inference { pyramid, encoder_attention_entries: entries, tokens_encoded: poi.len() })
    }
}
