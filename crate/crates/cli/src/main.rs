//! tileforge: batch preprocessing and evaluation for small-defect detection
//! on large grayscale scans. Stages hand off through files (PNG, CSV, JSON),
//! every output is written atomically, and a single --seed makes each
//! invocation bit-reproducible.

mod commands;
mod io;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "tileforge",
    version,
    about = "Preprocess large grayscale scans for small-defect detection and \
             evaluate merged detections"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Crop each scan to its largest foreground region plus a margin
    Crop(commands::crop::CropArgs),
    /// Slice images into overlapping tiles and project annotations
    Tile(commands::tile::TileArgs),
    /// Subsample negative images to a target negative-to-positive ratio
    Balance(commands::balance::BalanceArgs),
    /// Deal groups into k folds so no source image leaks across folds
    Split(commands::split::SplitArgs),
    /// Search anchor ratios and scales that fit the annotated box sizes
    OptimizeAnchors(commands::anchors::AnchorArgs),
    /// Map tile detections back to source coordinates and suppress duplicates
    Merge(commands::merge::MergeArgs),
    /// Score detections against annotations: mAP plus image-level accuracy
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Generate synthetic scans with exact ground-truth annotations
    Synth(commands::synth::SynthArgs),
    /// Summarize an annotations file: counts and a normalized area histogram
    Stats(commands::stats::StatsArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Clone, Copy)]
pub struct Common {
    /// Seed for all randomness in this invocation; echoed into every output
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Print a machine-readable JSON summary to standard output
    #[arg(long)]
    pub json: bool,
}

/// TILEFORGE_THREADS caps internal parallelism (default: all cores).
fn init_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("TILEFORGE_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| {
                anyhow::anyhow!("TILEFORGE_THREADS must be a positive integer, got {raw:?}")
            })?;
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn run(command: Command) -> Result<(Common, serde_json::Value)> {
    Ok(match command {
        Command::Crop(args) => (args.common, commands::crop::run(args)?),
        Command::Tile(args) => (args.common, commands::tile::run(args)?),
        Command::Balance(args) => (args.common, commands::balance::run(args)?),
        Command::Split(args) => (args.common, commands::split::run(args)?),
        Command::OptimizeAnchors(args) => (args.common, commands::anchors::run(args)?),
        Command::Merge(args) => (args.common, commands::merge::run(args)?),
        Command::Evaluate(args) => (args.common, commands::evaluate::run(args)?),
        Command::Synth(args) => (args.common, commands::synth::run(args)?),
        Command::Stats(args) => (args.common, commands::stats::run(args)?),
    })
}

fn main() {
    let cli = Cli::parse();
    match init_threads().and_then(|()| run(cli.command)) {
        Ok((common, summary)) => {
            if common.json {
                let wrapped = io::envelope(common.seed, summary);
                let text =
                    serde_json::to_string_pretty(&wrapped).expect("summary serializes");
                // a closed pipe (e.g. piping into head) is not an error
                use std::io::Write;
                let _ = writeln!(std::io::stdout(), "{text}");
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
