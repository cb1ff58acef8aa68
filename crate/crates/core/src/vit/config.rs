use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PatchGrid;

/// Input channels of the patch projection. Single-channel patches are
/// replicated to three channels before projection.
pub const ENGINE_CHANNELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EngineConfig {
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    pub frame_w: usize,
    pub frame_h: usize,
    pub weight_seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { patch_size: 16, embed_dim: 64, depth: 4, heads: 4, mlp_ratio: 4, frame_w: 64, frame_h: 64, weight_seed: 0 }
    }
}

impl EngineConfig {
    pub fn with_frame(mut self, w: usize, h: usize) -> Self {
        self.frame_w = w;
        self.frame_h = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.embed_dim == 0 || self.heads == 0 || self.embed_dim % self.heads != 0 {
            return bad(format!("embed dim {} not divisible by {} heads", self.embed_dim, self.heads));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp ratio must be positive".into());
        }
        let grid = PatchGrid::new(self.frame_w, self.frame_h, self.patch_size)?;
        // the 1/32 level halves the token grid once more
        if grid.rows % 2 != 0 || grid.cols % 2 != 0 {
            return bad(format!(
                "frame {}x{} must be a multiple of {} so the coarsest pyramid level is whole",
                self.frame_w,
                self.frame_h,
                2 * self.patch_size
            ));
        }
        for (name, v) in [
            ("patch size", self.patch_size),
            ("embed dim", self.embed_dim),
            ("depth", self.depth),
            ("heads", self.heads),
            ("mlp ratio", self.mlp_ratio),
            ("frame width", self.frame_w),
            ("frame height", self.frame_h),
        ] {
            if v > u16::MAX as usize {
                return bad(format!("{name} {v} does not fit the 16-bit header field"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> PatchGrid {
        PatchGrid { patch_size: self.patch_size, cols: self.frame_w / self.patch_size, rows: self.frame_h / self.patch_size }
    }

    pub fn num_patches(&self) -> usize {
        self.grid().count()
    }

    pub fn patch_input_len(&self) -> usize {
        self.patch_size * self.patch_size * ENGINE_CHANNELS
    }

    pub fn hidden_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    /// FNV-1a over the little-endian header fields and the seed; carried in
    /// the session handshake so both ends can confirm they run the same model.
    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        };
        for v in [self.patch_size, self.embed_dim, self.depth, self.heads, self.mlp_ratio, self.frame_w, self.frame_h] {
            feed(&(v as u16).to_le_bytes());
        }
        feed(&self.weight_seed.to_le_bytes());
        h
    }
}
