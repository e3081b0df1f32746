use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{json, Value};
use tileforge_core::dataset::{annotations_to_csv, balance_negatives, read_annotations_csv};

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct BalanceArgs {
    /// Annotations CSV to balance
    #[arg(long)]
    annotations: PathBuf,
    /// Output CSV with all positives and the sampled negatives
    #[arg(long)]
    out: PathBuf,
    /// Target negative-to-positive image ratio
    #[arg(long, default_value_t = 1.1)]
    ratio: f64,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: BalanceArgs) -> Result<Value> {
    let manifest = read_annotations_csv(&args.annotations)
        .with_context(|| format!("reading {}", args.annotations.display()))?;
    let negatives_before = manifest.negative_count();
    let outcome = balance_negatives(&manifest, args.ratio, args.common.seed)
        .with_context(|| format!("balancing {}", args.annotations.display()))?;
    io::atomic_write(&args.out, annotations_to_csv(&outcome.manifest).as_bytes())?;
    Ok(json!({
        "positives": outcome.manifest.positive_count(),
        "negatives_before": negatives_before,
        "requested_negatives": outcome.requested_negatives,
        "kept_negatives": outcome.kept_negatives,
        "achieved_ratio": outcome.achieved_ratio,
        "out": args.out,
    }))
}
