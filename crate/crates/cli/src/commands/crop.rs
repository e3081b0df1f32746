use std::collections::HashMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde_json::{json, Value};
use tileforge_core::cropper::{crop_with_margin, largest_foreground_bbox, otsu_threshold, Polarity};
use tileforge_core::dataset::{annotations_to_csv, read_annotations_csv, LabeledBox, Manifest};
use tileforge_core::geometry::BBox;
use tileforge_core::gray::GrayImage;

use crate::io;
use crate::Common;

#[derive(Args)]
pub struct CropArgs {
    /// Single input image (PNG or TIFF)
    #[arg(long, conflicts_with = "images_dir", required_unless_present = "images_dir")]
    image: Option<PathBuf>,
    /// Directory of input images, processed in name order
    #[arg(long)]
    images_dir: Option<PathBuf>,
    /// Output directory for cropped images plus crops.json
    #[arg(long)]
    out_dir: PathBuf,
    /// Pixels of context kept around the detected foreground
    #[arg(long, default_value_t = 16)]
    margin: u32,
    /// Which side of the automatic threshold counts as foreground
    #[arg(long, value_enum, default_value_t = PolarityArg::Bright)]
    polarity: PolarityArg,
    /// Annotations CSV in source coordinates; image paths must be the bare
    /// file names of the inputs
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Where to write annotations translated into crop coordinates
    /// (default: OUT_DIR/annotations.csv)
    #[arg(long, requires = "annotations")]
    out_annotations: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(clap::ValueEnum, Clone, Copy)]
pub enum PolarityArg {
    Bright,
    Dark,
}

impl From<PolarityArg> for Polarity {
    fn from(p: PolarityArg) -> Self {
        match p {
            PolarityArg::Bright => Polarity::BrightFg,
            PolarityArg::Dark => Polarity::DarkFg,
        }
    }
}

pub fn input_images(image: &Option<PathBuf>, images_dir: &Option<PathBuf>) -> Result<Vec<PathBuf>> {
    let inputs = match (image, images_dir) {
        (Some(img), None) => vec![img.clone()],
        (None, Some(dir)) => {
            let mut files = io::files_with_suffix(dir, ".png")?;
            files.extend(io::files_with_suffix(dir, ".tif")?);
            files.extend(io::files_with_suffix(dir, ".tiff")?);
            files.sort();
            if files.is_empty() {
                bail!("no PNG or TIFF images in {}", dir.display());
            }
            files
        }
        _ => unreachable!("clap enforces exactly one input flag"),
    };
    Ok(inputs)
}

struct CropOutcome {
    name: String,
    crop_box: BBox,
    width: u32,
    height: u32,
    threshold: u16,
}

pub fn run(args: CropArgs) -> Result<Value> {
    let inputs = input_images(&args.image, &args.images_dir)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let polarity: Polarity = args.polarity.into();
    let outcomes: Vec<CropOutcome> = inputs
        .par_iter()
        .map(|path| -> Result<CropOutcome> {
            let name = io::file_name(path)?.to_string();
            let img = GrayImage::load(path)
                .with_context(|| format!("loading {}", path.display()))?;
            let threshold = otsu_threshold(&img)
                .with_context(|| format!("thresholding {}", path.display()))?;
            let fg = largest_foreground_bbox(&img, threshold, polarity)
                .with_context(|| format!("finding foreground in {}", path.display()))?;
            let (cropped, crop_box) = crop_with_margin(&img, &fg, args.margin)
                .with_context(|| format!("cropping {}", path.display()))?;
            io::save_png_atomic(&cropped, &args.out_dir.join(&name))?;
            Ok(CropOutcome {
                name,
                crop_box,
                width: cropped.width(),
                height: cropped.height(),
                threshold,
            })
        })
        .collect::<Result<_>>()?;

    let mut crops = serde_json::Map::new();
    for o in &outcomes {
        crops.insert(
            o.name.clone(),
            json!({
                "x1": o.crop_box.x1,
                "y1": o.crop_box.y1,
                "x2": o.crop_box.x2,
                "y2": o.crop_box.y2,
                "width": o.width,
                "height": o.height,
                "threshold": o.threshold,
            }),
        );
    }
    io::write_json(
        &args.out_dir.join("crops.json"),
        args.common.seed,
        json!({ "margin": args.margin, "images": outcomes.len(), "crops": crops }),
    )?;

    let mut translated = 0usize;
    if let Some(ann_path) = &args.annotations {
        let manifest = read_annotations_csv(ann_path)
            .with_context(|| format!("reading {}", ann_path.display()))?;
        let by_name: HashMap<&str, &CropOutcome> =
            outcomes.iter().map(|o| (o.name.as_str(), o)).collect();
        let mut records = Vec::with_capacity(manifest.records.len());
        for rec in &manifest.records {
            let Some(o) = by_name.get(rec.image_path.as_str()) else {
                bail!(
                    "{} references image {} which is not among the inputs",
                    ann_path.display(),
                    rec.image_path
                );
            };
            let frame = BBox::new(0.0, 0.0, o.width as f64, o.height as f64)
                .expect("crop has positive extent");
            let boxes: Vec<LabeledBox> = rec
                .boxes
                .iter()
                .filter_map(|lb| {
                    // boxes outside the realized crop are clipped away
                    lb.bbox
                        .translated(-o.crop_box.x1, -o.crop_box.y1)
                        .clipped_to(&frame)
                        .map(|bbox| LabeledBox { bbox, class: lb.class.clone() })
                })
                .collect();
            translated += boxes.len();
            let mut rec = rec.clone();
            rec.boxes = boxes;
            records.push(rec);
        }
        let out = args
            .out_annotations
            .clone()
            .unwrap_or_else(|| args.out_dir.join("annotations.csv"));
        io::atomic_write(&out, annotations_to_csv(&Manifest { records }).as_bytes())?;
    }

    Ok(json!({
        "images": outcomes.len(),
        "annotation_boxes": translated,
        "out_dir": args.out_dir,
    }))
}
