//! Command-line front end. `run_cli` never exits the process; it returns the
//! status code (0 ok, 1 validation, 2 I/O).

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::calib::SolverOptions;
use crate::error::{Error, Result};
use crate::eval::ScaleMethod;
use crate::geom::{ResidualWeights, DEFAULT_RHO_MM_PER_RAD};
use crate::pipeline::{self, EvalOptions, ReportOptions};
use crate::simgen;
use crate::sync::Interpolation;

#[derive(Debug, Parser)]
#[command(name = "reconeval", version, about = "Accuracy analysis for arm-mounted monocular SLAM reconstructions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scene config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the base→pattern and camera→gripper transforms.
    Calibrate {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        arm: PathBuf,
        /// Rotation weight, mm per rad.
        #[arg(long, default_value_t = DEFAULT_RHO_MM_PER_RAD)]
        rho: f64,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also fit a similarity scale on the pattern side.
        #[arg(long)]
        scale_free: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attach joint angles to camera frames.
    Sync {
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        joints: PathBuf,
        #[arg(long, default_value_t = 50.0)]
        max_gap_ms: f64,
        /// Take the closer joint sample instead of interpolating.
        #[arg(long)]
        nearest: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ground-truth depth, scale and depth errors for every keyframe.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        extrinsics: PathBuf,
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long, value_enum, default_value_t = ScaleArg::LeastSquares)]
        scale: ScaleArg,
        #[arg(long, default_value_t = 50.0)]
        max_gap_ms: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Heatmaps, per-keyframe summary and effective region.
    Report {
        #[arg(long = "eval")]
        eval_dir: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        #[arg(long, default_value_t = 5)]
        median: usize,
        /// Upper colour clamp, mm.
        #[arg(long)]
        clamp_max: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ScaleArg {
    LeastSquares,
    Median,
    Weighted,
}

impl From<ScaleArg> for ScaleMethod {
    fn from(s: ScaleArg) -> Self {
        match s {
            ScaleArg::LeastSquares => ScaleMethod::LeastSquares,
            ScaleArg::Median => ScaleMethod::MedianOfRatios,
            ScaleArg::Weighted => ScaleMethod::VarianceWeighted,
        }
    }
}

fn gap_ns(ms: f64) -> Result<i64> {
    if !(ms >= 0.0 && ms.is_finite()) {
        return Err(Error::Usage(format!("--max-gap-ms must be non-negative, got {ms}")));
    }
    Ok((ms * 1e6).round() as i64)
}

fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Simulate { config, out, seed } => {
            let (mut cfg, arm) = simgen::load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let m = simgen::generate_dataset(&cfg, &arm, &out)?;
            Ok(format!("wrote {} files to {}", m.files.len() + 1, out.display()))
        }
        Command::Calibrate { samples, arm, rho, restarts, seed, scale_free, out } => {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(Error::Usage(format!("--rho must be positive, got {rho}")));
            }
            let opts = SolverOptions {
                weights: ResidualWeights::with_rho(rho),
                scale_free,
                restarts,
                seed,
                ..SolverOptions::default()
            };
            let r = pipeline::calibrate_files(&samples, &arm, &opts, &out)?;
            Ok(format!(
                "rms {:.6} mm after {} iterations (start {}, converged {})",
                r.final_rms_mm, r.iterations, r.restart_index, r.converged
            ))
        }
        Command::Sync { frames, joints, max_gap_ms, nearest, out } => {
            let policy = if nearest { Interpolation::Nearest } else { Interpolation::Linear };
            let r = pipeline::sync_files(&frames, &joints, gap_ns(max_gap_ms)?, policy, &out)?;
            Ok(format!("{} packets, {} dropped", r.packets.len(), r.dropped.len()))
        }
        Command::Evaluate { manifest, extrinsics, mesh, scale, max_gap_ms, out } => {
            let opts = EvalOptions { scale_method: scale.into(), max_gap_ns: gap_ns(max_gap_ms)?, ..EvalOptions::default() };
            let s = pipeline::evaluate_dataset(&manifest, &extrinsics, &mesh, &opts, &out)?;
            Ok(format!(
                "{} keyframes ({} skipped), {} points, mean |e| {:.6} mm",
                s.keyframes_evaluated,
                s.skipped.len(),
                s.n_points,
                s.mean_abs_err_mm
            ))
        }
        Command::Report { eval_dir, threshold, median, clamp_max, out } => {
            let opts = ReportOptions { threshold_mm: threshold, median_k: median, clamp_max_mm: clamp_max };
            let r = pipeline::report(&eval_dir, &opts, &out)?;
            Ok(format!("effective region covers {:.2}% at {} mm", 100.0 * r.region.fraction, threshold))
        }
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(msg) => {
            println!("{msg}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
