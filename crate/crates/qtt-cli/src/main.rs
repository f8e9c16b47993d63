//! `qttc`: batch experiment driver for tensor-train grid compression.

use clap::{Args, Parser, Subcommand};
use qtt_cli::{runner, testimg, CliError, ExitCode};
use std::path::PathBuf;
use std::process::ExitCode as ProcessExit;

#[derive(Parser)]
#[command(
    name = "qttc",
    about = "Fit, denoise, complete and compare tensor-train compressors on 2D/3D grids",
    long_about = "Runs one experiment described by a JSON config file and writes \
deterministic artifacts (metrics.csv, summary.json, checkpoints, reconstructions) \
to the output directory. Config reference and file formats are documented in the \
repository README. The Tucker baseline sizes its core either from r_max or, when \
param_budget is set, as the largest m with m^d + m * sum(sides) <= budget."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file describing the run
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's "out")
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed override: run only this seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for batch gradients (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct GenArgs {
    /// Side length (power of two)
    #[arg(long)]
    side: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Output path (.pgm for images, raw volume otherwise)
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit a 2D image
    Fit2d(RunArgs),
    /// Fit a 3D volume
    Fit3d(RunArgs),
    /// Fit against a noisy 2D target, score against the clean one
    Denoise2d(RunArgs),
    /// Fit against a noisy 3D target, score against the clean one
    Denoise3d(RunArgs),
    /// Fit a 2D image from a subset of observed pixels
    Complete2d(RunArgs),
    /// Fit a 3D volume from a subset of observed voxels
    Complete3d(RunArgs),
    /// Analytic TT-SVD decomposition at a rank cap
    Svd(RunArgs),
    /// Run several models x seeds and consolidate the results
    Compare(RunArgs),
    /// Generate a procedural natural-looking test image (PGM)
    GenImage(GenArgs),
    /// Generate a procedural test volume (raw f32 + JSON sidecar)
    GenVolume(GenArgs),
}

fn dispatch(cmd: Cmd) -> qtt_cli::Result<()> {
    let (name, args) = match &cmd {
        Cmd::Fit2d(a) => ("fit2d", a),
        Cmd::Fit3d(a) => ("fit3d", a),
        Cmd::Denoise2d(a) => ("denoise2d", a),
        Cmd::Denoise3d(a) => ("denoise3d", a),
        Cmd::Complete2d(a) => ("complete2d", a),
        Cmd::Complete3d(a) => ("complete3d", a),
        Cmd::Svd(a) => ("svd", a),
        Cmd::Compare(a) => ("compare", a),
        Cmd::GenImage(g) => {
            if !g.side.is_power_of_two() || g.side < 16 {
                return Err(CliError::config("side must be a power of two >= 16"));
            }
            let img = testimg::natural_image(g.side, g.seed);
            qtt_core::data::save_grid(&img, &g.out)?;
            return Ok(());
        }
        Cmd::GenVolume(g) => {
            if !g.side.is_power_of_two() || g.side < 8 {
                return Err(CliError::config("side must be a power of two >= 8"));
            }
            let vol = testimg::natural_volume(g.side, g.seed);
            qtt_core::data::save_grid(&vol, &g.out)?;
            return Ok(());
        }
    };
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    runner::execute(name, &args.config, args.out.as_deref(), args.seed)
}

fn main() -> ProcessExit {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ProcessExit::from(ExitCode::Ok as u8),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ProcessExit::from(e.code as u8)
        }
    }
}
