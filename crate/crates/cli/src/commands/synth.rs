use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};
use tileforge_core::dataset::{
    annotations_to_csv, derive_group_id, AnnotationRecord, LabeledBox, Manifest,
};
use tileforge_core::synthkit::{fnv1a64, generate_synthetic_scan, SynthSpec, SYNTH_CLASS};

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for scan PNGs plus annotations.csv and synth.json
    #[arg(long)]
    out_dir: PathBuf,
    /// Number of scans to generate
    #[arg(long, default_value_t = 10)]
    count: u32,
    /// Canvas size as WIDTHxHEIGHT
    #[arg(long, value_parser = io::parse_dims, default_value = "1200x1500")]
    size: (u32, u32),
    /// Defect count per scan is uniform on 0..=defect-max
    #[arg(long, default_value_t = 5)]
    defect_max: u32,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: SynthArgs) -> Result<Value> {
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let records: Vec<AnnotationRecord> = (0..args.count)
        .into_par_iter()
        .map(|i| -> Result<AnnotationRecord> {
            let name = format!("scan_{i:03}.png");
            let spec = SynthSpec {
                width: args.size.0,
                height: args.size.1,
                defect_count_max: args.defect_max,
                // stable per-scan stream, distinct per scan and global seed
                seed: fnv1a64(format!("{}/{name}", args.common.seed).as_bytes()),
                ..SynthSpec::default()
            };
            let (image, boxes) = generate_synthetic_scan(&spec);
            io::save_png_atomic(&image, &args.out_dir.join(&name))?;
            Ok(AnnotationRecord {
                group_id: derive_group_id(&name),
                boxes: boxes
                    .into_iter()
                    .map(|bbox| LabeledBox { bbox, class: SYNTH_CLASS.to_string() })
                    .collect(),
                image_path: name,
            })
        })
        .collect::<Result<_>>()?;

    let manifest = Manifest { records };
    io::atomic_write(
        &args.out_dir.join("annotations.csv"),
        annotations_to_csv(&manifest).as_bytes(),
    )?;
    // the file summary stays path-free so identical runs into different
    // directories stay byte-identical
    let file_summary = json!({
        "count": args.count,
        "width": args.size.0,
        "height": args.size.1,
        "positives": manifest.positive_count(),
        "negatives": manifest.negative_count(),
        "total_boxes": manifest.total_boxes(),
    });
    io::write_json(&args.out_dir.join("synth.json"), args.common.seed, file_summary.clone())?;
    let mut summary = file_summary;
    summary["out_dir"] = json!(args.out_dir);
    Ok(summary)
}
