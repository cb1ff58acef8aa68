//! Frame sequences from disk or from the synthetic generator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::mot::parse_mot_annotations;
use super::pnm::load_pnm;
use super::synth::{synth_sequence, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::AnnotationStore;
use crate::model::Frame;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FrameSource {
    Files { paths: Vec<PathBuf> },
    Synthetic { spec: SynthSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSource {
    pub frames: FrameSource,
    /// Id of the first frame (MOT numbering starts at 1).
    pub start_id: u64,
    pub annotations: Option<PathBuf>,
    pub fps: f64,
}

impl SequenceSource {
    /// All `.pgm`/`.ppm` files of `dir` in name order, plus `gt.txt` or
    /// `gt/gt.txt` when present.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "ppm")))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::Empty("no .pgm/.ppm frames in directory"));
        }
        let annotations = [dir.join("gt.txt"), dir.join("gt").join("gt.txt")].into_iter().find(|p| p.is_file());
        Ok(Self { frames: FrameSource::Files { paths }, start_id: 1, annotations, fps: 30.0 })
    }

    pub fn synthetic(spec: SynthSpec) -> Self {
        Self { start_id: spec.start_id, frames: FrameSource::Synthetic { spec }, annotations: None, fps: 30.0 }
    }

    /// Ground truth: the annotation file if given, else the generator's.
    pub fn load_annotations(&self) -> Result<Option<AnnotationStore>> {
        if let Some(p) = &self.annotations {
            return parse_mot_annotations(&std::fs::read_to_string(p)?).map(Some);
        }
        match &self.frames {
            FrameSource::Synthetic { spec } => Ok(Some(spec.annotations())),
            FrameSource::Files { .. } => Ok(None),
        }
    }
}

/// Frames in id order. Every frame must match the first one's shape.
pub fn load_frames(source: &SequenceSource) -> Result<Box<dyn Iterator<Item = Result<Frame>> + Send>> {
    let inner: Box<dyn Iterator<Item = Result<Frame>> + Send> = match &source.frames {
        FrameSource::Files { paths } => {
            let start = source.start_id;
            let paths = paths.clone();
            Box::new(paths.into_iter().enumerate().map(move |(i, p)| load_pnm(&p, start + i as u64)))
        }
        FrameSource::Synthetic { spec } => {
            spec.validate()?;
            let (frames, _) = synth_sequence(spec)?;
            Box::new(frames.into_iter().map(Ok))
        }
    };
    let mut shape = None;
    Ok(Box::new(inner.map(move |f| {
        let f = f?;
        let s = (f.width(), f.height(), f.channels());
        match shape {
            None => shape = Some(s),
            Some(first) if first != s => {
                return Err(Error::DimensionMismatch(format!(
                    "frame {} is {}x{}x{}, sequence started at {}x{}x{}",
                    f.frame_id(),
                    s.0,
                    s.1,
                    s.2,
                    first.0,
                    first.1,
                    first.2
                )))
            }
            _ => {}
        }
        Ok(f)
    })))
}

/// Writes `%06d.pgm`/`.ppm` frames (numbered by frame id) and `gt.txt`.
pub fn write_sequence(dir: &Path, frames: &[Frame], gt: &AnnotationStore) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for f in frames {
        let ext = if f.channels() == 1 { "pgm" } else { "ppm" };
        super::pnm::save_pnm(&dir.join(format!("{:06}.{ext}", f.frame_id())), f)?;
    }
    std::fs::write(dir.join("gt.txt"), super::mot::write_mot(gt))?;
    Ok(())
}
