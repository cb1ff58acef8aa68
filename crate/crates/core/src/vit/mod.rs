//! Desk-scale ViT backbone with memory token pools and sparse inference.

mod config;
mod engine;
pub mod ops;
pub mod params;
mod pyramid;
mod tokens;
pub mod weights_file;

pub use config::{EngineConfig, ENGINE_CHANNELS};
pub use engine::{Engine, Inference};
pub use pyramid::{rel_diff, FeatureMap, FeaturePyramid};
pub use tokens::{MemoryTokenPools, TokenSequence};

/// Analytic cost of one encoder block (one MSA plus one MLP) over `n`
/// tokens of width `d`: `12 n d^2 + 2 n^2 d`.
pub fn flops_per_block(n: u64, d: u64) -> u128 {
    let (n, d) = (n as u128, d as u128);
    12 * n * d * d + 2 * n * n * d
}

/// Whole-encoder cost for `depth` blocks.
pub fn flops(n: u64, d: u64, depth: u64) -> u128 {
    depth as u128 * flops_per_block(n, d)
}
