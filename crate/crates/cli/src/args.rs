use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Point-cloud annotation assist: pre-annotation, camera-LiDAR checks and
/// annotation quality metrics over KITTI-layout datasets.
#[derive(Debug, Parser)]
#[command(name = "palf", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit tight boxes around 3D detections and write one file per frame.
    Preannotate(PreannotateArgs),
    /// Check 3D boxes against 2D detections and write fusion reports.
    Fuse(FuseArgs),
    /// Score predicted boxes against ground truth.
    Evaluate(EvaluateArgs),
    /// Run the HTTP review service.
    Serve(ServeArgs),
    /// Write a synthetic KITTI-layout dataset with noisy detections.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FrameArgs {
    /// Dataset root with velodyne/, calib/, detections/ (and optionally image_2/).
    #[arg(long)]
    pub dataset_root: PathBuf,
    /// Frame ids or ranges, e.g. `000008-000010,000042`. Defaults to every frame.
    #[arg(long)]
    pub frames: Option<String>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    /// Camera whose projection matrix is used.
    #[arg(long, default_value = palf_core::io::DEFAULT_CAMERA_KEY)]
    pub camera: String,
    /// Print a JSON summary instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct PreannotateArgs {
    #[command(flatten)]
    pub frames: FrameArgs,
    /// Output directory [default: <dataset-root>/preannotations].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Fit only when the crop holds more points than this.
    #[arg(long)]
    pub point_threshold: Option<usize>,
    #[arg(long, value_name = "METERS")]
    pub crop_margin: Option<f64>,
    #[arg(long, value_name = "DEGREES")]
    pub yaw_halfwidth: Option<f64>,
    #[arg(long, value_name = "DEGREES")]
    pub yaw_step: Option<f64>,
    #[arg(long, value_name = "METERS")]
    pub ground_band: Option<f64>,
    /// Drop 3D detections scoring below this.
    #[arg(long)]
    pub min_score: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[command(flatten)]
    pub frames: FrameArgs,
    /// Directory of per-frame box files (detection or session JSON)
    /// [default: <dataset-root>/preannotations].
    #[arg(long)]
    pub preannotations: Option<PathBuf>,
    /// Output directory [default: <dataset-root>/fusion].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub iou2d_threshold: Option<f64>,
    /// Reject matched pairs whose centers are farther apart than this.
    #[arg(long, value_name = "PIXELS")]
    pub max_center_distance: Option<f64>,
    /// Ignore 2D detections scoring below this.
    #[arg(long)]
    pub min_2d_score: Option<f64>,
    /// List missed detections without back-projecting them.
    #[arg(long)]
    pub no_missed_check: bool,
    /// Skip the checks entirely; pre-annotations are accepted as they are.
    #[arg(long, conflicts_with = "no_missed_check")]
    pub disabled: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predicted boxes: a detection or session file, or a directory of them.
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference boxes, same forms as --pred. Directories pair files by name.
    #[arg(long)]
    pub gt: PathBuf,
    /// Minimum 3D IoU for a true positive.
    #[arg(long, default_value_t = palf_core::evaluation::DEFAULT_MIN_IOU3D)]
    pub min_iou: f64,
    /// Session file or directory supplying annotation time.
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Row label in the table.
    #[arg(long, default_value = "pred")]
    pub label: String,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config file and PALF_DATASET_ROOT.
    #[arg(long)]
    pub dataset_root: Option<PathBuf>,
    /// Overrides the config file and PALF_PORT.
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub bind: Option<std::net::IpAddr>,
    /// Announce the listening address as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Dataset root to create.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of frames, numbered from 000000.
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exact detections with no noise.
    #[arg(long)]
    pub clean: bool,
    #[arg(long)]
    pub json: bool,
}
