//! `fusionkit` command-line frontend.
//!
//! Machine-readable results go to stdout as one JSON object per line (CSV for `eval` unless
//! `--format json`); human-readable summaries go to stderr. Exit codes: 0 success, 2 usage or
//! validation error, 3 numerical or domain failure.

mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::RunConfig;

use crate::error::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "fusionkit", version, about = "Sparse-LiDAR guided monocular depth toolkit")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "FUSIONKIT_CONFIG")]
    pub config: Option<PathBuf>,

    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    pub dump_config: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a pseudo-dense depth/confidence pair from a LiDAR scan.
    Pdr(PdrArgs),
    /// Correct a depth map with graph-based correction anchored to LiDAR.
    Refine(RefineArgs),
    /// Optimize a depth map directly on an image triplet.
    Optimize(OptimizeArgs),
    /// Evaluate predicted depth maps against ground truth.
    Eval(EvalArgs),
    /// Lift a depth map to a pseudo-LiDAR point cloud.
    Export(ExportArgs),
    /// Render a synthetic scene to KITTI-style files.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Size {
    pub width: usize,
    pub height: usize,
}

impl std::str::FromStr for Size {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH")?;
        let width = w.trim().parse().map_err(|_| format!("bad width '{w}'"))?;
        let height = h.trim().parse().map_err(|_| format!("bad height '{h}'"))?;
        if width == 0 || height == 0 {
            return Err("size must be positive".into());
        }
        Ok(Size { width, height })
    }
}

#[derive(Debug, Args)]
pub struct CalibArgs {
    /// KITTI calibration file (P2, R0_rect, Tr_velo_to_cam).
    #[arg(long)]
    pub calib: PathBuf,
    /// Image size the calibration refers to, when different from the working size.
    #[arg(long)]
    pub calib_size: Option<Size>,
}

#[derive(Debug, Args)]
pub struct PdrArgs {
    /// Velodyne scan (.bin, LiDAR frame).
    #[arg(long)]
    pub points: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// Output size, e.g. 640x192.
    #[arg(long)]
    pub size: Size,
    /// Disc radius in pixels (default scales 4 px at width 640).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Keep this many evenly spaced beams.
    #[arg(long)]
    pub keep_beams: Option<usize>,
    /// Output directory for pdr_depth.png and pdr_confidence.png.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Initial depth PNG.
    #[arg(long)]
    pub depth: PathBuf,
    /// Velodyne scan (.bin, LiDAR frame).
    #[arg(long)]
    pub points: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    #[arg(long)]
    pub gdc_k: Option<usize>,
    #[arg(long)]
    pub gdc_stride: Option<usize>,
    /// Anchor weight; `inf` pins anchors exactly.
    #[arg(long)]
    pub gdc_anchor_strength: Option<f64>,
    #[arg(long)]
    pub keep_beams: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Report wall-clock time and frames per second.
    #[arg(long)]
    pub time: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Distill {
    None,
    Gdc,
    Truth,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Scene description (TOML); defaults to the bundled textured plane.
    #[arg(long, conflicts_with = "frames")]
    pub scene: Option<PathBuf>,
    /// Previous, target and next images (file mode).
    #[arg(long, value_delimiter = ',', num_args = 3, requires_all = ["poses", "calib"])]
    pub frames: Option<Vec<PathBuf>>,
    /// JSON array of three world-to-camera poses for the frames (file mode).
    #[arg(long)]
    pub poses: Option<PathBuf>,
    #[arg(long)]
    pub calib: Option<PathBuf>,
    /// Initial depth PNG (file mode).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Distillation target PNG for the scale-invariant term (file mode).
    #[arg(long)]
    pub enhanced: Option<PathBuf>,
    /// Ground-truth depth PNG for reporting (file mode).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Synthetic mode: initial depth as a multiple of the truth.
    #[arg(long, default_value_t = 2.0)]
    pub init_scale: f64,
    /// Synthetic mode: distillation target.
    #[arg(long, value_enum, default_value_t = Distill::None)]
    pub distill: Distill,
    /// Optimize neighbor poses jointly, starting from the given ones.
    #[arg(long)]
    pub joint_pose: bool,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Write the final depth PNG here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EvalFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CropArg {
    None,
    Eigen,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted depth PNGs (repeatable; paired with --gt in order).
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth depth PNGs.
    #[arg(long, required = true)]
    pub gt: Vec<PathBuf>,
    #[arg(long)]
    pub cap: Option<f64>,
    #[arg(long, value_enum)]
    pub crop: Option<CropArg>,
    /// Worker threads over input pairs.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, value_enum, default_value_t = EvalFormat::Csv)]
    pub format: EvalFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormatArg {
    Ply,
    Bin,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub depth: PathBuf,
    #[command(flatten)]
    pub calib: CalibArgs,
    /// Color image for PLY vertex colors.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExportFormatArg::Ply)]
    pub format: ExportFormatArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene description (TOML); defaults to the bundled textured plane.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Overrides the texture seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_USAGE
    }
}

/// Parses `args` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
