// SPDX-License-Identifier: Apache-2.0

//! `reefstitch` command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use reefstitch::color::AwbFallback;
use reefstitch::estimation::RansacConfig;
use reefstitch::features::NeighborPointMode;
use reefstitch::pipeline::{self, PipelineConfig};
use reefstitch::stitch::{CompositeOrder, Interpolation, StitchConfig};
use reefstitch::synth::{MotionModel, ScenarioSpec, SequenceSpec};
use reefstitch::{Error, ErrorKind};

#[derive(Parser)]
#[command(
    name = "reefstitch",
    version,
    about = "Color-correct, stitch and analyze reef survey frames"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// White-balance every frame of a directory.
    Correct {
        in_dir: PathBuf,
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Fallback::GrayWorld)]
        fallback: Fallback,
    },
    /// Register frames to the first one and composite them into a map.
    Stitch {
        frames_dir: PathBuf,
        correspondences: PathBuf,
        out_map: PathBuf,
        #[command(flatten)]
        stitch: StitchArgs,
    },
    /// Draw fish trajectories over a stitched map.
    Trajectories {
        map: PathBuf,
        layout: PathBuf,
        annotations: PathBuf,
        out_image: PathBuf,
    },
    /// Write per-fish and per-frame behavior tables.
    Features {
        layout: PathBuf,
        annotations: PathBuf,
        out_prefix: PathBuf,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Run every stage.
    Pipeline {
        frames_dir: PathBuf,
        correspondences: PathBuf,
        annotations: PathBuf,
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Fallback::GrayWorld)]
        fallback: Fallback,
        #[command(flatten)]
        stitch: StitchArgs,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Generate a synthetic sequence with ground truth.
    Synth {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 15)]
        frames: usize,
        #[arg(long, default_value_t = 5)]
        fish: usize,
        /// Fraction of corrupted correspondences per frame.
        #[arg(long, default_value_t = 0.0)]
        outliers: f64,
        /// Keypoint noise standard deviation, pixels.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        #[arg(long, default_value_t = 20)]
        keypoints: usize,
        #[arg(long, default_value_t = 50.0)]
        max_translation: f64,
        /// Degrees.
        #[arg(long, default_value_t = 10.0)]
        max_rotation: f64,
    },
}

#[derive(Args)]
struct StitchArgs {
    #[arg(long, default_value_t = 3.0)]
    ransac_eps: f64,
    #[arg(long, default_value_t = 0.8)]
    ransac_tau: f64,
    #[arg(long, default_value_t = 1000)]
    ransac_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Interp::Bilinear)]
    interp: Interp,
    #[arg(long, default_value_t = 3)]
    close_kernel: usize,
    #[arg(long, default_value_t = 1)]
    close_iters: usize,
    #[arg(long, value_enum, default_value_t = Order::LaterOnTop)]
    composite_order: Order,
}

#[derive(Args)]
struct FeatureArgs {
    #[arg(long, default_value_t = 3.0)]
    fps: f64,
    /// Report heading angles in degrees instead of radians.
    #[arg(long)]
    degrees: bool,
    #[arg(long, value_enum, default_value_t = NeighborPoint::Center)]
    neighbor_point: NeighborPoint,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fallback {
    GrayWorld,
    Passthrough,
}

#[derive(Clone, Copy, ValueEnum)]
enum Interp {
    Nearest,
    Bilinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum Order {
    LaterOnTop,
    EarlierOnTop,
}

#[derive(Clone, Copy, ValueEnum)]
enum NeighborPoint {
    Center,
    Head,
}

impl From<Fallback> for AwbFallback {
    fn from(f: Fallback) -> Self {
        match f {
            Fallback::GrayWorld => AwbFallback::GrayWorld,
            Fallback::Passthrough => AwbFallback::Passthrough,
        }
    }
}

impl StitchArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.ransac = RansacConfig {
            epsilon: self.ransac_eps,
            tau: self.ransac_tau,
            max_iterations: self.ransac_iters,
            seed: self.seed,
        };
        cfg.stitch = StitchConfig {
            interpolation: match self.interp {
                Interp::Nearest => Interpolation::Nearest,
                Interp::Bilinear => Interpolation::Bilinear,
            },
            closing_kernel: self.close_kernel,
            closing_iterations: self.close_iters,
            composite_order: match self.composite_order {
                Order::LaterOnTop => CompositeOrder::LaterOnTop,
                Order::EarlierOnTop => CompositeOrder::EarlierOnTop,
            },
            ..cfg.stitch
        };
    }
}

impl FeatureArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.fps = self.fps;
        cfg.angles_in_degrees = self.degrees;
        cfg.neighbor_point_mode = match self.neighbor_point {
            NeighborPoint::Center => NeighborPointMode::Center,
            NeighborPoint::Head => NeighborPointMode::Head,
        };
    }
}

fn run(command: Command) -> reefstitch::Result<()> {
    let mut cfg = PipelineConfig::default();
    match command {
        Command::Correct {
            in_dir,
            out_dir,
            fallback,
        } => {
            pipeline::run_correct(&in_dir, &out_dir, fallback.into())?;
        }
        Command::Stitch {
            frames_dir,
            correspondences,
            out_map,
            stitch,
        } => {
            stitch.apply(&mut cfg);
            pipeline::run_stitch(&frames_dir, &correspondences, &out_map, &cfg)?;
        }
        Command::Trajectories {
            map,
            layout,
            annotations,
            out_image,
        } => {
            pipeline::run_trajectories(&map, &layout, &annotations, &out_image)?;
        }
        Command::Features {
            layout,
            annotations,
            out_prefix,
            features,
        } => {
            features.apply(&mut cfg);
            pipeline::run_features(&layout, &annotations, &out_prefix, &cfg)?;
        }
        Command::Pipeline {
            frames_dir,
            correspondences,
            annotations,
            out_dir,
            fallback,
            stitch,
            features,
        } => {
            cfg.awb_fallback = fallback.into();
            stitch.apply(&mut cfg);
            features.apply(&mut cfg);
            pipeline::run_pipeline(&frames_dir, &correspondences, &annotations, &out_dir, &cfg)?;
        }
        Command::Synth {
            out_dir,
            frames,
            fish,
            outliers,
            noise,
            seed,
            width,
            height,
            keypoints,
            max_translation,
            max_rotation,
        } => {
            let spec = ScenarioSpec {
                sequence: SequenceSpec {
                    frame_width: width,
                    frame_height: height,
                    n_frames: frames,
                    keypoints,
                    outlier_fraction: outliers,
                    noise_sigma: noise,
                    seed,
                    ..Default::default()
                },
                motion: MotionModel {
                    max_translation,
                    max_rotation: max_rotation.to_radians(),
                    seed,
                    ..Default::default()
                },
                n_fish: fish,
            };
            pipeline::run_synth(&out_dir, &spec)?;
        }
    }
    Ok(())
}

fn configure_threads() -> Result<(), Error> {
    let Ok(value) = std::env::var("REEFSTITCH_THREADS") else {
        return Ok(());
    };
    let threads =
        value.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
            Error::InvalidConfig(format!("REEFSTITCH_THREADS must be a positive integer, got {value:?}"))
        })?;
    // Fails only if a pool already exists, which cannot happen this early.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn fail(err: &Error) -> ExitCode {
    let message = err.to_string().replace('\n', " ");
    eprintln!("error[{}]: {message}", err.code());
    ExitCode::from(err.kind().exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ErrorKind::Usage.exit_code() as u8
            } else {
                0
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
