use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde_json::{json, Value};
use tileforge_core::anchor_opt::{optimize_anchors, DEParams, SearchSpace};
use tileforge_core::dataset::read_annotations_csv;

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct AnchorArgs {
    /// Annotations CSV whose box sizes drive the search (use the annotations
    /// of the tiles the detector will actually train on)
    #[arg(long)]
    annotations: PathBuf,
    /// Output JSON with the optimized configuration and search history
    #[arg(long)]
    out: PathBuf,
    /// Aspect-ratio bounds LO:HI with LO >= 1; ratios enter as (1/r, 1, r)
    #[arg(long, value_parser = io::parse_bounds, default_value = "1:4")]
    ratio_bounds: (f64, f64),
    /// Bounds LO:HI shared by the three anchor scale coordinates
    #[arg(long, value_parser = io::parse_bounds, default_value = "0.3:2")]
    scale_bounds: (f64, f64),
    /// Anchor base sizes (one pyramid level each)
    #[arg(long, value_delimiter = ',', default_value = "32,64,128,256,512")]
    sizes: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    generations: usize,
    /// Population size is this multiple of the search dimension (4)
    #[arg(long, default_value_t = 15)]
    population_multiplier: usize,
    /// Stop early when population fitness spread falls below
    /// tolerance * |mean fitness|
    #[arg(long, default_value_t = 0.01)]
    tolerance: f64,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: AnchorArgs) -> Result<Value> {
    let manifest = read_annotations_csv(&args.annotations)
        .with_context(|| format!("reading {}", args.annotations.display()))?;
    let gt_sizes: Vec<(f64, f64)> = manifest
        .records
        .iter()
        .flat_map(|r| r.boxes.iter().map(|b| (b.bbox.width(), b.bbox.height())))
        .collect();

    let space = SearchSpace {
        r_bounds: args.ratio_bounds,
        scale_bounds: args.scale_bounds,
        sizes: args.sizes.clone(),
    };
    let params = DEParams {
        population_multiplier: args.population_multiplier,
        max_generations: args.generations,
        tolerance: args.tolerance,
        seed: args.common.seed,
        ..DEParams::default()
    };
    let result = optimize_anchors(&gt_sizes, &space, &params)
        .with_context(|| format!("optimizing anchors for {}", args.annotations.display()))?;

    let mut out_value = json!({ "boxes": gt_sizes.len() });
    if let (Value::Object(map), Value::Object(result_map)) =
        (&mut out_value, serde_json::to_value(&result)?)
    {
        map.extend(result_map);
    }
    io::write_json(&args.out, args.common.seed, out_value)?;

    Ok(json!({
        "boxes": gt_sizes.len(),
        "fitness": result.fitness,
        "default_fitness": result.default_fitness,
        "below_half_count": result.below_half_count,
        "generations_run": result.history.len().saturating_sub(1),
        "ratios": result.config.ratios,
        "scales": result.config.scales,
        "out": args.out,
    }))
}
