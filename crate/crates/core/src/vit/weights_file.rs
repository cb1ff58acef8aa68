//! Little-endian weights file.
//!
//! ```text
//! magic      "AVWT"
//! version    u8 (1)
//! P, D, L, h, mlp_ratio, frame_w, frame_h   u16 each
//! count      u64   declared parameter count
//! params     count x f32, canonical tensor order (see `params`)
//! ```
//!
//! The declared count must equal the count implied by the header fields:
//!
//! ```text
//! 3P²D + D                      patch projection
//! + ND                          positional table, N = (w/P)(h/P)
//! + L(4D² + 2rD² + 9D + rD)     encoder blocks
//! + 8D² + 2rD² + 17D + rD       reconstruction decoder
//! + 16D² + 4D                   three transposed convs and one conv
//! + D + 1                       objectness head
//! ```

use std::io::{Read, Write};

use super::config::EngineConfig;
use super::engine::Engine;
use super::params::Weights;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AVWT";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 7 * 2 + 8;

pub fn write_weights<W: Write>(engine: &Engine, mut out: W) -> Result<()> {
    let cfg = engine.config();
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.push(VERSION);
    for v in [cfg.patch_size, cfg.embed_dim, cfg.depth, cfg.heads, cfg.mlp_ratio, cfg.frame_w, cfg.frame_h] {
        header.extend_from_slice(&(v as u16).to_le_bytes());
    }
    let flat = engine.weights().flatten();
    header.extend_from_slice(&(flat.len() as u64).to_le_bytes());
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(flat.len() * 4);
    for v in flat {
        body.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&body)?;
    Ok(())
}

/// Reads a weights file. The returned engine's `weight_seed` is 0 since the
/// parameters no longer derive from a seed.
pub fn read_weights<R: Read>(mut input: R) -> Result<Engine> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header).map_err(|_| Error::Weights("truncated header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Weights("bad magic".into()));
    }
    if header[4] != VERSION {
        return Err(Error::Weights(format!("unsupported version {}", header[4])));
    }
    let field = |i: usize| u16::from_le_bytes([header[5 + 2 * i], header[6 + 2 * i]]) as usize;
    let cfg = EngineConfig {
        patch_size: field(0),
        embed_dim: field(1),
        depth: field(2),
        heads: field(3),
        mlp_ratio: field(4),
        frame_w: field(5),
        frame_h: field(6),
        weight_seed: 0,
    };
    cfg.validate()?;
    let declared = u64::from_le_bytes(header[19..27].try_into().expect("8 bytes"));
    let mut weights = Weights::zeros(&cfg);
    let expected = weights.param_count() as u64;
    if declared != expected {
        return Err(Error::Weights(format!("header declares {declared} parameters, config implies {expected}")));
    }
    let mut body = Vec::with_capacity(expected as usize * 4);
    input.read_to_end(&mut body)?;
    if body.len() as u64 != expected * 4 {
        return Err(Error::Weights(format!("{} parameter bytes, expected {}", body.len(), expected * 4)));
    }
    let flat: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    weights.load_flat(&flat);
    Engine::with_weights(cfg, weights)
}

pub fn save(engine: &Engine, path: &std::path::Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_weights(engine, std::io::BufWriter::new(file))
}

pub fn load(path: &std::path::Path) -> Result<Engine> {
    let file = std::fs::File::open(path)?;
    read_weights(std::io::BufReader::new(file))
}
