//! Binary PGM (P5) and PPM (P6) with maxval 255.

use std::path::Path;

use crate::error::{Error, Result};
use crate::model::Frame;

/// Decodes a P5/P6 image; `#` comments are allowed between header fields.
pub fn decode_pnm(bytes: &[u8], frame_id: u64) -> Result<Frame> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => return Err(Error::Image(format!("unsupported format {:?}", String::from_utf8_lossy(other)))),
    };
    let w = parse_field(next_token(bytes, &mut pos)?, "width")?;
    let h = parse_field(next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_field(next_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::Image(format!("maxval {maxval} unsupported (need 255)")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::Image("missing separator after header".into()));
    }
    pos += 1;
    let need = w.checked_mul(h).and_then(|n| n.checked_mul(channels)).ok_or_else(|| Error::Image("image too large".into()))?;
    let raster = &bytes[pos..];
    if raster.len() < need {
        return Err(Error::Image(format!("raster has {} bytes, expected {need}", raster.len())));
    }
    Frame::new(frame_id, w, h, channels, raster[..need].to_vec())
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() && bytes[*pos] != b'#' {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::Image("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_field(tok: &[u8], name: &str) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .ok_or_else(|| Error::Image(format!("bad {name} {:?}", String::from_utf8_lossy(tok))))
}

pub fn encode_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.pixels());
    out
}

pub fn load_pnm(path: &Path, frame_id: u64) -> Result<Frame> {
    let bytes = std::fs::read(path)?;
    decode_pnm(&bytes, frame_id).map_err(|e| match e {
        Error::Image(m) => Error::Image(format!("{}: {m}", path.display())),
        e => e,
    })
}

pub fn save_pnm(path: &Path, frame: &Frame) -> Result<()> {
    Ok(std::fs::write(path, encode_pnm(frame))?)
}
