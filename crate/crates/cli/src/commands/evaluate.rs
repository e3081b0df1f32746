use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{json, Value};
use tileforge_core::dataset::read_annotations_csv;
use tileforge_core::eval::{evaluate, read_detections_csv, EvalConfig};

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct EvaluateArgs {
    /// Ground-truth annotations CSV (negatives as empty rows)
    #[arg(long)]
    annotations: PathBuf,
    /// Detections CSV in the same coordinate frame
    #[arg(long)]
    detections: PathBuf,
    /// Output report JSON
    #[arg(long)]
    out: PathBuf,
    /// IoU needed for a detection to match a ground-truth box
    #[arg(long, default_value_t = 0.5)]
    match_iou: f64,
    /// Detections below this score are invisible to the accuracy metric
    #[arg(long, default_value_t = 0.5)]
    score_threshold: f64,
    /// A positive image is correct only if the union IoU of its annotations
    /// and detections exceeds this
    #[arg(long, default_value_t = 0.2)]
    union_iou_min: f64,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: EvaluateArgs) -> Result<Value> {
    let manifest = read_annotations_csv(&args.annotations)
        .with_context(|| format!("reading {}", args.annotations.display()))?;
    let detections = read_detections_csv(&args.detections)
        .with_context(|| format!("reading {}", args.detections.display()))?;
    let cfg = EvalConfig {
        match_iou: args.match_iou,
        score_threshold: args.score_threshold,
        union_iou_min: args.union_iou_min,
    };
    let report = evaluate(&manifest, &detections, &cfg)
        .with_context(|| format!("evaluating {}", args.detections.display()))?;
    io::write_json(&args.out, args.common.seed, serde_json::to_value(&report)?)?;

    Ok(json!({
        "map": report.map,
        "accuracy": report.accuracy,
        "true_positives": report.true_positives,
        "false_positives": report.false_positives,
        "false_negatives": report.false_negatives,
        "images": report.per_image.len(),
        "out": args.out,
    }))
}
