//! `inspect`: command-line front end for the uav-inspect pipelines.
//!
//! Every flag can also be given as `key = value` in the file passed to
//! `--config` (key = long flag name, `-` or `_`); flags win.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uav_inspect::report::ErrorReport;
use uav_inspect::{Error, ErrorClass};

#[derive(Parser, Debug)]
#[command(
    name = "inspect",
    version,
    about = "Post-processing for UAV building inspection surveys"
)]
pub struct Cli {
    /// Key-value config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Report path; the report goes to stdout when omitted.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// sequential | parallel
    #[arg(long, global = true)]
    pub exec: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gap between two adjacent buildings from a reconstructed point cloud.
    Distances(DistancesArgs),
    /// Roof plan area from one or more segmentation masks.
    RoofArea(RoofAreaArgs),
    /// Mosaic a directory of nadir frames.
    Stitch(StitchArgs),
    /// Rooftop object occupancy on a stitched canvas.
    Layout(LayoutArgs),
    /// Write a synthetic fixture with known ground truth.
    #[command(subcommand)]
    Fixture(FixtureCommand),
}

#[derive(Args, Debug, Default)]
pub struct DistancesArgs {
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// ply | xyz (default: from the extension)
    #[arg(long)]
    pub format: Option<String>,
    /// roof | in-between | frontal
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub flight_log: Option<PathBuf>,
    /// `timestamp qw qx qy qz tx ty tz` per line.
    #[arg(long)]
    pub poses: Option<PathBuf>,
    /// Metric units per reconstruction unit; skips flight-log sync.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Seconds added to pose timestamps, or `auto` to scan for it.
    #[arg(long)]
    pub time_offset: Option<String>,
    #[arg(long)]
    pub offset_search: Option<f64>,
    #[arg(long)]
    pub offset_step: Option<f64>,
    #[arg(long)]
    pub sync_tolerance: Option<f64>,
    /// barometric | gps
    #[arg(long)]
    pub altitude_source: Option<String>,
    /// Metres; shorter pose pairs are ignored by the scale estimate.
    #[arg(long)]
    pub min_baseline: Option<f64>,
    #[arg(long)]
    pub cluster_radius: Option<f64>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    #[arg(long)]
    pub bin_width: Option<f64>,
    #[arg(long)]
    pub threshold_factor: Option<f64>,
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub min_inlier_fraction: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub max_angle: Option<f64>,
    #[arg(long)]
    pub roof_quantile: Option<f64>,
    #[arg(long)]
    pub separation_axis: Option<String>,
    #[arg(long)]
    pub slice_axis: Option<String>,
}

#[derive(Args, Debug, Default)]
pub struct RoofAreaArgs {
    /// Mask image; repeat for batch mode.
    #[arg(long)]
    pub mask: Vec<PathBuf>,
    /// Camera-to-roof depth in metres, used for every mask.
    #[arg(long)]
    pub depth: Option<f64>,
    /// CSV with `image,depth_m` columns, matched on file name.
    #[arg(long)]
    pub depth_csv: Option<PathBuf>,
    /// Focal length in pixels.
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long)]
    pub threshold: Option<u8>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub equalize: Option<bool>,
    /// 4 | 8
    #[arg(long)]
    pub connectivity: Option<String>,
    #[arg(long)]
    pub cx: Option<f64>,
    #[arg(long)]
    pub cy: Option<f64>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub k2: Option<f64>,
    #[arg(long)]
    pub p1: Option<f64>,
    #[arg(long)]
    pub p2: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct StitchArgs {
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long)]
    pub canvas: Option<PathBuf>,
    #[arg(long)]
    pub transforms: Option<PathBuf>,
    /// Keep frames at this rate using timestamps in the file names.
    #[arg(long)]
    pub rate_hz: Option<f64>,
    /// last-writer | feather
    #[arg(long)]
    pub blend: Option<String>,
    #[arg(long)]
    pub max_corners: Option<usize>,
    #[arg(long)]
    pub min_spacing: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub search_radius: Option<usize>,
    #[arg(long)]
    pub min_ncc: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub inlier_threshold: Option<f64>,
    #[arg(long)]
    pub min_inliers: Option<usize>,
    #[arg(long)]
    pub max_canvas_side: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct LayoutArgs {
    #[arg(long)]
    pub canvas: Option<PathBuf>,
    #[arg(long)]
    pub roof_mask: Option<PathBuf>,
    #[arg(long)]
    pub object_mask: Option<PathBuf>,
    #[arg(long)]
    pub mask_threshold: Option<u8>,
}

#[derive(Subcommand, Debug)]
pub enum FixtureCommand {
    /// Two buildings, pose track and flight log.
    Distances {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "in-between")]
        mode: String,
        #[arg(long, default_value_t = 12.96)]
        gap: f64,
        #[arg(long, default_value_t = 0.37)]
        scale: f64,
    },
    /// Rendered L-shaped roof.
    RoofArea {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        depth: f64,
        #[arg(long, default_value_t = 1000.0)]
        focal: f64,
    },
    /// Frame sequence over a textured roof.
    Stitch {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
    },
    /// Canvas with roof and object masks.
    Occupancy {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 38.73)]
        percent: f64,
        #[arg(long, default_value_t = 400)]
        width: usize,
        #[arg(long, default_value_t = 300)]
        height: usize,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 2,
        ErrorClass::Algorithm => 3,
        ErrorClass::Io => 4,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let report = ErrorReport::from_error(&e);
            eprintln!("{}", serde_json::to_string(&report).expect("error report serializes"));
            ExitCode::from(exit_code(&e))
        }
    }
}
