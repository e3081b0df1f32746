use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{json, Value};
use tileforge_core::dataset::{normalized_area_histogram, read_annotations_csv};

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct StatsArgs {
    /// Annotations CSV to summarize
    #[arg(long)]
    annotations: PathBuf,
    /// Optional output JSON path; --json prints the same summary to stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Box areas are normalized by the square of this reference side (the
    /// smallest anchor base size by default)
    #[arg(long, default_value_t = 32.0)]
    reference_size: f64,
    /// Histogram bin edges over normalized area
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.25,0.5,1,2,4")]
    bins: Vec<f64>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: StatsArgs) -> Result<Value> {
    let manifest = read_annotations_csv(&args.annotations)
        .with_context(|| format!("reading {}", args.annotations.display()))?;
    let histogram = normalized_area_histogram(
        &manifest,
        args.reference_size * args.reference_size,
        &args.bins,
    )
    .with_context(|| format!("summarizing {}", args.annotations.display()))?;

    let summary = json!({
        "images": manifest.records.len(),
        "positives": manifest.positive_count(),
        "negatives": manifest.negative_count(),
        "groups": manifest.groups().len(),
        "total_boxes": manifest.total_boxes(),
        "reference_area": args.reference_size * args.reference_size,
        "histogram": serde_json::to_value(&histogram)?,
    });
    if let Some(out) = &args.out {
        io::write_json(out, args.common.seed, summary.clone())?;
    }
    Ok(summary)
}
