use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{json, Value};
use tileforge_core::dataset::{annotations_to_csv, grouped_kfold, read_annotations_csv};

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct SplitArgs {
    /// Annotations CSV to split
    #[arg(long)]
    annotations: PathBuf,
    /// Output directory for fold_<i>.csv files plus folds.json
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of folds
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: SplitArgs) -> Result<Value> {
    let manifest = read_annotations_csv(&args.annotations)
        .with_context(|| format!("reading {}", args.annotations.display()))?;
    let folds = grouped_kfold(&manifest, args.k, args.common.seed)
        .with_context(|| format!("splitting {}", args.annotations.display()))?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mut fold_summaries = Vec::with_capacity(folds.len());
    for (i, fold) in folds.iter().enumerate() {
        let file = format!("fold_{i}.csv");
        io::atomic_write(&args.out_dir.join(&file), annotations_to_csv(fold).as_bytes())?;
        fold_summaries.push(json!({
            "file": file,
            "groups": fold.groups(),
            "records": fold.records.len(),
            "positives": fold.positive_count(),
            "negatives": fold.negative_count(),
        }));
    }
    let summary = json!({
        "k": args.k,
        "records": manifest.records.len(),
        "folds": fold_summaries,
    });
    io::write_json(&args.out_dir.join("folds.json"), args.common.seed, summary.clone())?;
    Ok(summary)
}
