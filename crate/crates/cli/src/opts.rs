use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use arena_core::akis::AkisConfig;
use arena_core::eval::{AnnotationStore, OracleConfig};
use arena_core::harness::{parse_mot_annotations, LatencyModel, SequenceSource, SynthSpec};
use arena_core::pps::PpsConfig;
use arena_core::protocol::{AkisMode, Detector};
use arena_core::vit::{weights_file, Engine, EngineConfig};
use clap::{Args, ValueEnum};

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Args)]
pub struct EngineOpts {
    /// Engine configuration as JSON; flags below override its fields.
    #[arg(long)]
    pub engine_config: Option<PathBuf>,
    /// Weight file; carries its own configuration, so it excludes the flags below.
    #[arg(long, conflicts_with_all = ["engine_config", "patch_size", "embed_dim", "depth", "heads", "weight_seed"])]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub patch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub weight_seed: Option<u64>,
}

impl EngineOpts {
    /// Builds the engine for frames of `width` x `height`.
    pub fn engine(&self, width: usize, height: usize) -> Result<Engine> {
        if let Some(path) = &self.weights {
            let engine = weights_file::load(path).with_context(|| format!("loading weights {}", path.display()))?;
            let c = engine.config();
            if (c.frame_w, c.frame_h) != (width, height) {
                bail!("weights are for {}x{} frames, got {width}x{height}", c.frame_w, c.frame_h);
            }
            return Ok(engine);
        }
        Ok(Engine::new(self.config(width, height)?)?)
    }

    /// Configuration only; seeded weights are not materialized.
    pub fn config(&self, width: usize, height: usize) -> Result<EngineConfig> {
        if self.weights.is_some() {
            return Ok(*self.engine(width, height)?.config());
        }
        let mut cfg: EngineConfig = match &self.engine_config {
            Some(p) => read_json(p)?,
            None => EngineConfig::default(),
        };
        cfg.patch_size = self.patch_size.unwrap_or(cfg.patch_size);
        cfg.embed_dim = self.embed_dim.unwrap_or(cfg.embed_dim);
        cfg.depth = self.depth.unwrap_or(cfg.depth);
        cfg.heads = self.heads.unwrap_or(cfg.heads);
        cfg.weight_seed = self.weight_seed.unwrap_or(cfg.weight_seed);
        let cfg = cfg.with_frame(width, height);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorKind {
    Oracle,
    Head,
}

#[derive(Debug, Args)]
pub struct DetectorOpts {
    #[arg(long, value_enum, default_value_t = DetectorKind::Oracle)]
    pub detector: DetectorKind,
    /// Probability that the oracle misses a ground-truth box.
    #[arg(long, default_value_t = 0.0)]
    pub oracle_drop: f64,
    /// Corner jitter of oracle boxes, in pixels.
    #[arg(long, default_value_t = 0.0)]
    pub oracle_jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub oracle_seed: u64,
    #[arg(long, default_value_t = 0.5)]
    pub head_threshold: f32,
}

impl DetectorOpts {
    pub fn detector(&self) -> Result<Detector> {
        Ok(match self.detector {
            DetectorKind::Oracle => {
                let cfg = OracleConfig { drop_rate: self.oracle_drop, jitter: self.oracle_jitter, rng_seed: self.oracle_seed };
                cfg.validate()?;
                Detector::Oracle(cfg)
            }
            DetectorKind::Head => Detector::Head { threshold: self.head_threshold },
        })
    }
}

#[derive(Debug, Args)]
pub struct SourceOpts {
    /// Directory of .pgm/.ppm frames, with gt.txt or gt/gt.txt if annotated.
    #[arg(long, required_unless_present = "synth", conflicts_with = "synth")]
    pub frames: Option<PathBuf>,
    /// Synthetic sequence spec (JSON) instead of frames on disk.
    #[arg(long)]
    pub synth: Option<PathBuf>,
    /// MOT-format annotation file; overrides the one found next to the frames.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
}

impl SourceOpts {
    pub fn source(&self) -> Result<SequenceSource> {
        let mut src = match (&self.frames, &self.synth) {
            (Some(dir), _) => SequenceSource::from_dir(dir).with_context(|| format!("reading {}", dir.display()))?,
            (None, Some(spec)) => SequenceSource::synthetic(read_json::<SynthSpec>(spec)?),
            (None, None) => bail!("either --frames or --synth is required"),
        };
        if self.annotations.is_some() {
            src.annotations = self.annotations.clone();
        }
        Ok(src)
    }
}

pub fn load_annotations(path: &PathBuf) -> Result<AnnotationStore> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_mot_annotations(&text)?)
}

#[derive(Debug, Args)]
pub struct CameraOpts {
    /// Fraction of the sampling region transmitted.
    #[arg(long = "sampling-rate", visible_alias = "p", default_value_t = PpsConfig::default().sampling_rate)]
    pub sampling_rate: f64,
    /// Per-patch difference sum that pulls a patch into the sampling region.
    #[arg(long = "diff-threshold", visible_alias = "F", default_value_t = PpsConfig::default().diff_threshold)]
    pub diff_threshold: u64,
    /// Box expansion margin, in patches.
    #[arg(long = "margin", visible_alias = "m", default_value_t = PpsConfig::default().margin)]
    pub margin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = AkisConfig::default().beta)]
    pub beta: f64,
    #[arg(long, default_value_t = AkisConfig::default().k_lower)]
    pub k_lower: u32,
    #[arg(long, default_value_t = AkisConfig::default().k_upper)]
    pub k_upper: u32,
    #[arg(long, default_value_t = AkisConfig::default().block_size)]
    pub flow_block: usize,
    #[arg(long, default_value_t = AkisConfig::default().search_radius)]
    pub flow_radius: usize,
    /// Send a keyframe every N frames instead of adapting the interval.
    #[arg(long)]
    pub fixed_interval: Option<u32>,
    /// Link speed used for modelled transmit times.
    #[arg(long, default_value_t = LatencyModel::default().link_mbps)]
    pub link_mbps: f64,
}

impl CameraOpts {
    pub fn pps(&self) -> PpsConfig {
        PpsConfig { sampling_rate: self.sampling_rate, diff_threshold: self.diff_threshold, margin: self.margin, rng_seed: self.seed }
    }

    pub fn akis(&self) -> AkisConfig {
        AkisConfig {
            beta: self.beta,
            k_lower: self.k_lower,
            k_upper: self.k_upper,
            block_size: self.flow_block,
            search_radius: self.flow_radius,
        }
    }

    pub fn akis_mode(&self) -> AkisMode {
        self.fixed_interval.map_or(AkisMode::Adaptive, AkisMode::Fixed)
    }

    pub fn latency(&self) -> LatencyModel {
        LatencyModel { link_mbps: self.link_mbps, ..LatencyModel::default() }
    }
}
