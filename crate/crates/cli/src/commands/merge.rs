use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;
use serde_json::{json, Value};
use tileforge_core::eval::{detections_to_csv, nms, read_detections_csv, Detection};
use tileforge_core::tiler::{detection_to_source_coords, tile_file_name, TilePlan, TileSpec};

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct MergeArgs {
    /// Detections CSV in tile coordinates (image ids are tile file names)
    #[arg(long)]
    detections: PathBuf,
    /// Plan JSON written by `tile`, or a directory of *_plan.json files
    #[arg(long)]
    plans: PathBuf,
    /// Output CSV with merged source-coordinate detections
    #[arg(long)]
    out: PathBuf,
    /// IoU above which a lower-scoring same-class detection is suppressed
    #[arg(long, default_value_t = 0.5)]
    nms_iou: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Deserialize)]
struct PlanFile {
    source_file: String,
    plan: TilePlan,
}

pub fn run(args: MergeArgs) -> Result<Value> {
    let plan_paths = if args.plans.is_dir() {
        let found = io::files_with_suffix(&args.plans, "_plan.json")?;
        if found.is_empty() {
            bail!("no *_plan.json files in {}", args.plans.display());
        }
        found
    } else {
        vec![args.plans.clone()]
    };

    let mut tiles_by_name: HashMap<String, (String, TileSpec)> = HashMap::new();
    for path in &plan_paths {
        let value = io::read_json(path)?;
        let file: PlanFile = serde_json::from_value(value)
            .with_context(|| format!("parsing {}", path.display()))?;
        for (idx, tile) in file.plan.tiles.iter().enumerate() {
            let (row, col) = file.plan.row_col(idx);
            let name = tile_file_name(&tile.source_id, row, col);
            if tiles_by_name
                .insert(name.clone(), (file.source_file.clone(), tile.clone()))
                .is_some()
            {
                bail!("tile {name} appears in more than one plan under {}", args.plans.display());
            }
        }
    }

    let detections = read_detections_csv(&args.detections)
        .with_context(|| format!("reading {}", args.detections.display()))?;
    let mut per_source: BTreeMap<String, Vec<Detection>> = BTreeMap::new();
    for det in &detections {
        let Some((source_file, tile)) = tiles_by_name.get(&det.image_id) else {
            bail!(
                "{} references tile {} not covered by the plans",
                args.detections.display(),
                det.image_id
            );
        };
        per_source.entry(source_file.clone()).or_default().push(Detection {
            image_id: source_file.clone(),
            bbox: detection_to_source_coords(&det.bbox, tile),
            class: det.class.clone(),
            score: det.score,
        });
    }

    let mut merged = Vec::new();
    for dets in per_source.values() {
        merged.extend(nms(dets, args.nms_iou));
    }
    io::atomic_write(&args.out, detections_to_csv(&merged).as_bytes())?;

    Ok(json!({
        "detections_in": detections.len(),
        "detections_out": merged.len(),
        "sources": per_source.len(),
        "out": args.out,
    }))
}
