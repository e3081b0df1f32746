use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};
use tileforge_core::dataset::{
    annotations_to_csv, read_annotations_csv, AnnotationRecord, LabeledBox, Manifest,
};
use tileforge_core::gray::{GrayImage, Resample};
use tileforge_core::tiler::{
    crop_tile, plan_tiles, project_annotations_to_tile, tile_file_name, TileMode,
};

use crate::commands::crop::input_images;
use crate::io;
use crate::Common;

#[derive(Args)]
pub struct TileArgs {
    /// Single input image (PNG or TIFF)
    #[arg(long, conflicts_with = "images_dir", required_unless_present = "images_dir")]
    image: Option<PathBuf>,
    /// Directory of input images, processed in name order
    #[arg(long)]
    images_dir: Option<PathBuf>,
    /// Output directory for tile PNGs and per-image plan JSONs
    #[arg(long)]
    out_dir: PathBuf,
    /// Tile size as WIDTHxHEIGHT in source pixels
    #[arg(long, value_parser = io::parse_dims, default_value = "500x600")]
    tile: (u32, u32),
    /// Lay out COLSxROWS tiles with mirror-symmetric offsets (default 5x5)
    #[arg(long, value_parser = io::parse_dims, conflicts_with = "overlap")]
    grid: Option<(u32, u32)>,
    /// Instead: fixed per-axis overlap OVXxOVY in source pixels
    #[arg(long, value_parser = io::parse_dims)]
    overlap: Option<(u32, u32)>,
    /// Upscale factor applied to every tile and its annotations
    #[arg(long, default_value_t = 2.0)]
    scale: f64,
    #[arg(long, value_enum, default_value_t = ResampleArg::Bilinear)]
    resample: ResampleArg,
    /// Annotations CSV in input-image coordinates; image paths must be the
    /// bare file names of the inputs
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Where to write per-tile annotations (default: OUT_DIR/annotations.csv)
    #[arg(long, requires = "annotations")]
    out_annotations: Option<PathBuf>,
    /// Minimum visible-area fraction for a clipped annotation to survive
    #[arg(long, default_value_t = 0.25)]
    min_visibility: f64,
    #[command(flatten)]
    pub common: Common,
}

#[derive(clap::ValueEnum, Clone, Copy)]
pub enum ResampleArg {
    Bilinear,
    Nearest,
}

impl From<ResampleArg> for Resample {
    fn from(r: ResampleArg) -> Self {
        match r {
            ResampleArg::Bilinear => Resample::Bilinear,
            ResampleArg::Nearest => Resample::Nearest,
        }
    }
}

pub fn run(args: TileArgs) -> Result<Value> {
    if !(0.0..=1.0).contains(&args.min_visibility) {
        bail!("--min-visibility must be in [0, 1], got {}", args.min_visibility);
    }
    let inputs = input_images(&args.image, &args.images_dir)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let mode = match (args.grid, args.overlap) {
        (Some((n_x, n_y)), None) => TileMode::GridCount { n_x, n_y },
        (None, Some((ov_x, ov_y))) => TileMode::Overlap { ov_x, ov_y },
        (None, None) => TileMode::GridCount { n_x: 5, n_y: 5 },
        (Some(_), Some(_)) => unreachable!("clap rejects --grid with --overlap"),
    };
    let resample: Resample = args.resample.into();

    let manifest = args
        .annotations
        .as_ref()
        .map(|p| read_annotations_csv(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let records_by_name: HashMap<&str, &AnnotationRecord> = manifest
        .as_ref()
        .map(|m| m.records.iter().map(|r| (r.image_path.as_str(), r)).collect())
        .unwrap_or_default();

    let mut seen_stems = HashSet::new();
    let mut tile_records = Vec::new();
    let mut total_tiles = 0usize;
    for path in &inputs {
        let name = io::file_name(path)?.to_string();
        let stem = io::file_stem(path)?.to_string();
        if !seen_stems.insert(stem.clone()) {
            bail!("two inputs share the stem {stem:?}; tile names would collide");
        }
        let source_record = match &manifest {
            Some(_) => Some(*records_by_name.get(name.as_str()).with_context(|| {
                format!("annotations are missing an entry for {name} (negatives need an empty row)")
            })?),
            None => None,
        };

        let img =
            GrayImage::load(path).with_context(|| format!("loading {}", path.display()))?;
        let plan = plan_tiles(
            &stem,
            img.width(),
            img.height(),
            args.tile.0,
            args.tile.1,
            args.scale,
            mode,
        )
        .with_context(|| format!("planning tiles for {}", path.display()))?;

        plan.tiles
            .par_iter()
            .enumerate()
            .map(|(idx, tile)| -> Result<()> {
                let (row, col) = plan.row_col(idx);
                let tile_img = crop_tile(&img, tile, resample)
                    .with_context(|| format!("cutting tile {row},{col} of {name}"))?;
                io::save_png_atomic(&tile_img, &args.out_dir.join(tile_file_name(&stem, row, col)))
            })
            .collect::<Result<()>>()?;
        total_tiles += plan.tiles.len();

        if let Some(rec) = source_record {
            for (idx, tile) in plan.tiles.iter().enumerate() {
                let (row, col) = plan.row_col(idx);
                let boxes: Vec<LabeledBox> = rec
                    .boxes
                    .iter()
                    .filter_map(|lb| {
                        project_annotations_to_tile(&[lb.bbox], tile, args.min_visibility)
                            .pop()
                            .map(|bbox| LabeledBox { bbox, class: lb.class.clone() })
                    })
                    .collect();
                tile_records.push(AnnotationRecord {
                    image_path: tile_file_name(&stem, row, col),
                    boxes,
                    // tiles inherit the source's group so a split can never
                    // scatter one blade across folds
                    group_id: rec.group_id.clone(),
                });
            }
        }

        io::write_json(
            &args.out_dir.join(format!("{stem}_plan.json")),
            args.common.seed,
            json!({
                "source_file": name,
                "resample": match resample {
                    Resample::Bilinear => "bilinear",
                    Resample::Nearest => "nearest",
                },
                "min_visibility": args.min_visibility,
                "plan": serde_json::to_value(&plan)?,
            }),
        )?;
    }

    let mut annotated_tiles = 0usize;
    if manifest.is_some() {
        annotated_tiles = tile_records.iter().filter(|r| r.is_positive()).count();
        let out = args
            .out_annotations
            .clone()
            .unwrap_or_else(|| args.out_dir.join("annotations.csv"));
        io::atomic_write(
            &out,
            annotations_to_csv(&Manifest { records: tile_records }).as_bytes(),
        )?;
    }

    Ok(json!({
        "images": inputs.len(),
        "tiles": total_tiles,
        "positive_tiles": annotated_tiles,
        "out_dir": args.out_dir,
    }))
}
