//! `faunalens` — aerial wildlife survey pipeline harness.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 too many frame
//! failures, 1 anything else.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "faunalens", version, about = "Tiled aerial animal detection with super-resolution backends, altitude priors, and survey metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline config JSON (used by `run`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or output file for `upscale`/`degrade`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for frame-level parallelism (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Boxes,
    Centers,
}

#[derive(Clone, Copy, ValueEnum)]
enum UpscaleBackend {
    Bicubic,
    ToyHan,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Blob,
    ToyNet,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a named preset.
    Synth {
        /// One of: savmap-like, aed-like, savmap-patch.
        #[arg(long)]
        preset: String,
        #[arg(long, default_value_t = 10)]
        frames: usize,
    },
    /// Validate a manifest plus annotations and print a summary.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Boxes)]
        kind: KindArg,
        #[arg(long, default_value_t = 100)]
        box_size: u32,
        /// Optional frame_id,altitude_m CSV to attach.
        #[arg(long)]
        altitude: Option<PathBuf>,
    },
    /// Split a frame into fixed-size tiles.
    Tile {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 512)]
        tile_size: u32,
        #[arg(long, default_value_t = 0)]
        overlap: u32,
    },
    /// Bicubic-downsample an image by a protocol factor.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        factor: u32,
    },
    /// Upscale an image; speaks the external-adapter protocol
    /// (`--in <path> --out <path> --scale <r>`).
    Upscale {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        scale: u32,
        #[arg(long, value_enum, default_value_t = UpscaleBackend::Bicubic)]
        backend: UpscaleBackend,
        /// Weight file base path (toy-han); seeded weights when absent.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Run a detector over manifest frames (or one image) and write the
    /// detections CSV.
    Detect {
        #[arg(long, conflicts_with = "image")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = DetectorArg::Blob)]
        detector: DetectorArg,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 12)]
        min_area: usize,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Altitude for a single image (manifest frames carry their own).
        #[arg(long)]
        altitude: Option<f64>,
        #[arg(long, default_value_t = false)]
        altitude_fusion: bool,
    },
    /// Evaluate a detections CSV against ground truth.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Boxes)]
        kind: KindArg,
        #[arg(long, default_value_t = 100)]
        box_size: u32,
        #[arg(long, default_value_t = 0.3)]
        iou_threshold: f64,
        #[arg(long, default_value_t = 200.0)]
        chebyshev_threshold: f64,
        #[arg(long, default_value_t = 0.1)]
        conf_threshold: f64,
    },
    /// Evaluate across a sweep of IoU thresholds and plot the series.
    Sweep {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum, default_value_t = KindArg::Boxes)]
        kind: KindArg,
        #[arg(long, default_value_t = 100)]
        box_size: u32,
        /// Comma-separated ascending thresholds; default 0.1..0.9 step 0.1.
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long, default_value_t = 0.1)]
        conf_threshold: f64,
    },
    /// Run the full pipeline described by `--config` and emit reports.
    Run,
    /// Re-emit Markdown/CSV/SVG from a stored report.json.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
    /// Verify the altitude-fusion layers against finite differences.
    GradCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message);
            ExitCode::from(err.code)
        }
    }
}

pub(crate) struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Self::new(2, message)
    }

    fn data(message: impl Into<String>) -> Self {
        Self::new(3, message)
    }
}
