mod opts;

use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use arena_client::replay_socket;
use arena_core::harness::{
    load_frames, replay, replay_trace, synth_sequence, write_sequence, ReplayConfig, ReplayReport, SynthObject, SynthSpec, TraceSpec,
};
use arena_core::vit::weights_file;
use arena_core::Frame;
use arena_server::AppState;
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use opts::{load_annotations, CameraOpts, DetectorOpts, EngineOpts, SourceOpts};

#[derive(Debug, Parser)]
#[command(name = "arena", version, about = "Patch-of-interest video analytics: edge server, camera and replay harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the edge server: binary camera protocol plus the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Camera protocol port.
        #[arg(long, default_value_t = 7070)]
        port: u16,
        #[arg(long, default_value_t = 8080)]
        http_port: u16,
        /// Frame size the engine is built for.
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[command(flatten)]
        engine: EngineOpts,
        #[command(flatten)]
        detector: DetectorOpts,
        /// Ground truth for the oracle detector (MOT format).
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Answer with detections only; no backbone inference.
        #[arg(long)]
        skip_inference: bool,
    },
    /// Stream a sequence to a running server and write the report.
    Camera {
        #[arg(long, default_value = "127.0.0.1:7070")]
        connect: String,
        #[command(flatten)]
        source: SourceOpts,
        #[command(flatten)]
        camera: CameraOpts,
        #[command(flatten)]
        engine: EngineOpts,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Replay a sequence in-process (loopback) or against a server (socket).
    Replay {
        #[arg(long, value_enum, default_value_t = Mode::Loopback)]
        mode: Mode,
        #[arg(long, default_value = "127.0.0.1:7070")]
        connect: String,
        #[command(flatten)]
        source: SourceOpts,
        #[command(flatten)]
        camera: CameraOpts,
        #[command(flatten)]
        engine: EngineOpts,
        #[command(flatten)]
        detector: DetectorOpts,
        #[arg(long)]
        skip_inference: bool,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Replay a synthetic patch-count trace (sizes and accounting only).
    Trace {
        /// Trace spec as JSON: frames, interval, patch_counts, seed.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[command(flatten)]
        engine: EngineOpts,
        #[command(flatten)]
        camera: CameraOpts,
        #[arg(long)]
        report_out: Option<PathBuf>,
    },
    /// Write a synthetic annotated sequence as PNM frames plus gt.txt.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Full spec as JSON; the flags below are ignored when given.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 128)]
        width: usize,
        #[arg(long, default_value_t = 96)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        channels: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of moving objects.
        #[arg(long, default_value_t = 2)]
        objects: usize,
    },
    /// Write the seeded weights of an engine configuration to a file.
    Weights {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        width: usize,
        #[arg(long)]
        height: usize,
        #[command(flatten)]
        engine: EngineOpts,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Loopback,
    Socket,
}

/// Peeks the first frame for the sequence geometry and hands back an
/// iterator that still yields it.
fn open_sequence(source: &SourceOpts) -> Result<(Frame, impl Iterator<Item = arena_core::Result<Frame>>, Option<Arc<arena_core::eval::AnnotationStore>>)> {
    let src = source.source()?;
    let gt = src.load_annotations()?.map(Arc::new);
    let mut frames = load_frames(&src)?;
    let first = frames.next().context("sequence has no frames")??;
    Ok((first.clone(), std::iter::once(Ok(first)).chain(frames), gt))
}

fn replay_config(first: &Frame, camera: &CameraOpts, engine: &EngineOpts) -> Result<ReplayConfig> {
    let ecfg = engine.config(first.width(), first.height())?;
    let mut cfg = ReplayConfig::new(ecfg, first.channels(), camera.pps(), camera.akis(), camera.akis_mode());
    cfg.latency = camera.latency();
    cfg.validate()?;
    Ok(cfg)
}

fn emit(report: &ReplayReport, out: Option<&PathBuf>) -> Result<ExitCode> {
    let json = report.to_json();
    match out {
        Some(path) => {
            std::fs::write(path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
            eprintln!(
                "{} frames, mean PoI proportion {}, mean latency {:.1} us -> {}",
                report.frames.len(),
                report.mean_poi_proportion().map_or("n/a".into(), |q| format!("{q:.4}")),
                report.latency.mean_total_us,
                path.display()
            );
        }
        None => println!("{json}"),
    }
    if let Some(e) = &report.error {
        eprintln!("run ended early: {e}");
    }
    Ok(if report.complete { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn synth_spec(width: usize, height: usize, channels: usize, frames: usize, seed: u64, objects: usize) -> SynthSpec {
    let objects = (0..objects)
        .map(|i| {
            let (i, w, h) = (i as i64, width as i64, height as i64);
            SynthObject {
                x: (w / 8 + i * w / 4) % w.max(1),
                y: (h / 6 + i * h / 3) % h.max(1),
                w: (width / 6).max(4),
                h: (height / 5).max(4),
                vx: 2 - i % 3,
                vy: 1 - i % 2,
                class_id: 1,
            }
        })
        .collect();
    SynthSpec { width, height, channels, frames, start_id: 1, seed, objects, pan: (0, 0), motion_start: 0 }
}

async fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Serve { bind, port, http_port, width, height, engine, detector, annotations, skip_inference } => {
            let engine = engine.engine(width, height)?;
            let gt = annotations.as_ref().map(load_annotations).transpose()?;
            let state = AppState::new(engine, detector.detector()?, gt).skip_inference(skip_inference);
            arena_server::run(state, SocketAddr::new(bind, port), SocketAddr::new(bind, http_port)).await?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Camera { connect, source, camera, engine, report_out } => {
            let (first, frames, gt) = open_sequence(&source)?;
            let cfg = replay_config(&first, &camera, &engine)?;
            let report = replay_socket(connect.as_str(), frames, gt, &cfg).await?;
            emit(&report, report_out.as_ref())
        }
        Command::Replay { mode, connect, source, camera, engine, detector, skip_inference, report_out } => {
            let (first, frames, gt) = open_sequence(&source)?;
            let mut cfg = replay_config(&first, &camera, &engine)?;
            cfg.detector = detector.detector()?;
            cfg.skip_inference = skip_inference;
            let report = match mode {
                Mode::Loopback => {
                    let engine = Arc::new(engine.engine(first.width(), first.height())?);
                    let frames: Vec<_> = frames.collect();
                    tokio::task::spawn_blocking(move || replay(frames, gt, &cfg, engine)).await??
                }
                Mode::Socket => replay_socket(connect.as_str(), frames, gt, &cfg).await?,
            };
            emit(&report, report_out.as_ref())
        }
        Command::Trace { spec, width, height, channels, engine, camera, report_out } => {
            let text = std::fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let trace: TraceSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", spec.display()))?;
            let mut cfg = ReplayConfig::new(engine.config(width, height)?, channels, camera.pps(), camera.akis(), camera.akis_mode());
            cfg.latency = camera.latency();
            emit(&replay_trace(&trace, &cfg)?, report_out.as_ref())
        }
        Command::Synth { out, spec, width, height, channels, frames, seed, objects } => {
            let spec = match spec {
                Some(p) => serde_json::from_str(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
                None => synth_spec(width, height, channels, frames, seed, objects),
            };
            let (frames, gt) = synth_sequence(&spec)?;
            std::fs::create_dir_all(&out)?;
            write_sequence(&out, &frames, &gt)?;
            eprintln!("{} frames, {} boxes -> {}", frames.len(), gt.total_boxes(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Weights { out, width, height, engine } => {
            if engine.weights.is_some() {
                bail!("--weights is an input; use the engine flags to describe the configuration");
            }
            let engine = engine.engine(width, height)?;
            weights_file::save(&engine, &out)?;
            eprintln!("{} parameters -> {}", engine.param_count(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("ARENA_LOG").unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    match rt.block_on(run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
