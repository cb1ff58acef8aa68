//! MOT-challenge ground truth: `frame,id,x,y,w,h,conf,class,vis` per line.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::eval::{Annotation, AnnotationStore};
use crate::model::BBox;

/// Parses MOT ground truth. Lines with `conf == 0` are ignored; blank lines
/// are skipped. The class column is optional (default 1); values that do
/// not fit in `u16` map to class 0.
pub fn parse_mot_annotations(text: &str) -> Result<AnnotationStore> {
    let mut store = AnnotationStore::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line, msg };
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() < 7 {
            return Err(bad(format!("expected at least 7 fields, found {}", fields.len())));
        }
        let num = |i: usize, name: &str| -> Result<f64> {
            fields[i].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(format!("{name} {:?} is not a number", fields[i])))
        };
        let frame = num(0, "frame")?;
        if frame < 0.0 || frame.fract() != 0.0 {
            return Err(bad(format!("frame {:?} is not a non-negative integer", fields[0])));
        }
        let (x, y, w, h) = (num(2, "x")?, num(3, "y")?, num(4, "w")?, num(5, "h")?);
        let conf = num(6, "conf")?;
        let class = if fields.len() > 7 { num(7, "class")? } else { 1.0 };
        if conf == 0.0 {
            continue;
        }
        let bbox = BBox::from_xywh(x as f32, y as f32, w as f32, h as f32).map_err(|e| bad(e.to_string()))?;
        let class_id = if (0.0..=u16::MAX as f64).contains(&class) && class.fract() == 0.0 { class as u16 } else { 0 };
        store.insert(frame as u64, Annotation { bbox, class_id }).map_err(|e| bad(e.to_string()))?;
    }
    Ok(store)
}

/// Inverse of [`parse_mot_annotations`]; track ids are per-frame ordinals.
pub fn write_mot(store: &AnnotationStore) -> String {
    let mut out = String::new();
    for f in store.frame_ids() {
        for (i, a) in store.get(f).iter().enumerate() {
            let b = a.bbox;
            let _ = writeln!(out, "{f},{},{},{},{},{},1,{},1", i + 1, b.x1, b.y1, b.x2 - b.x1, b.y2 - b.y1, a.class_id);
        }
    }
    out
}
