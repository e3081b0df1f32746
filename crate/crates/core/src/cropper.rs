//! Foreground extraction from grayscale scans: histogram thresholding,
//! largest-component selection and margin-padded cropping.

use thiserror::Error;

use crate::geometry::BBox;
use crate::gray::{GrayError, GrayImage};

#[derive(Debug, Error)]
pub enum CropError {
    #[error("constant image: all pixels equal {0}, no threshold separates two classes")]
    ConstantImage(u16),
    #[error("no foreground pixels after binarization")]
    NoForeground,
    #[error("crop box ({x1},{y1})-({x2},{y2}) exceeds image {img_w}x{img_h}")]
    BoxOutOfBounds { x1: f64, y1: f64, x2: f64, y2: f64, img_w: u32, img_h: u32 },
    #[error(transparent)]
    Image(#[from] GrayError),
}

/// Which side of the threshold is foreground. The two polarities partition
/// the image: bright foreground is intensity > t, dark is intensity ≤ t.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    BrightFg,
    DarkFg,
}

/// Threshold maximizing between-class variance of the intensity histogram,
/// splitting into classes {≤ t} and {> t}. Ties resolve to the smallest t.
pub fn otsu_threshold(img: &GrayImage) -> Result<u16, CropError> {
    let hist = img.histogram();
    let total: u64 = hist.iter().sum();
    let total_sum: u64 = hist
        .iter()
        .enumerate()
        .map(|(v, &n)| v as u64 * n)
        .sum();

    let mut best_t: Option<u16> = None;
    let mut best_sigma = f64::NEG_INFINITY;
    let mut w0: u64 = 0;
    let mut sum0: u64 = 0;
    for t in 0..hist.len() - 1 {
        w0 += hist[t];
        sum0 += t as u64 * hist[t];
        let w1 = total - w0;
        if w0 == 0 || w1 == 0 {
            continue;
        }
        let mu0 = sum0 as f64 / w0 as f64;
        let mu1 = (total_sum - sum0) as f64 / w1 as f64;
        let sigma = w0 as f64 * w1 as f64 * (mu0 - mu1) * (mu0 - mu1);
        if sigma > best_sigma {
            best_sigma = sigma;
            best_t = Some(t as u16);
        }
    }
    best_t.ok_or_else(|| CropError::ConstantImage(img.get(0, 0)))
}

/// Tight bounding box of the largest 8-connected foreground component,
/// measured by pixel count. Equal-area ties resolve to the component whose
/// first pixel comes earliest in row-major order.
pub fn largest_foreground_bbox(
    img: &GrayImage,
    threshold: u16,
    polarity: Polarity,
) -> Result<BBox, CropError> {
    let (w, h) = (img.width(), img.height());
    let is_fg = |x: u32, y: u32| match polarity {
        Polarity::BrightFg => img.get(x, y) > threshold,
        Polarity::DarkFg => img.get(x, y) <= threshold,
    };

    let mut visited = vec![false; w as usize * h as usize];
    let idx = |x: u32, y: u32| y as usize * w as usize + x as usize;
    let mut best: Option<(u64, u32, u32, u32, u32)> = None; // (area, min_x, min_y, max_x, max_y)
    let mut queue = std::collections::VecDeque::new();

    for sy in 0..h {
        for sx in 0..w {
            if visited[idx(sx, sy)] || !is_fg(sx, sy) {
                continue;
            }
            let (mut area, mut min_x, mut min_y, mut max_x, mut max_y) = (0u64, sx, sy, sx, sy);
            visited[idx(sx, sy)] = true;
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                area += 1;
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                        if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                            continue;
                        }
                        let (nx, ny) = (nx as u32, ny as u32);
                        if !visited[idx(nx, ny)] && is_fg(nx, ny) {
                            visited[idx(nx, ny)] = true;
                            queue.push_back((nx, ny));
                        }
                    }
                }
            }
            if best.map_or(true, |(a, ..)| area > a) {
                best = Some((area, min_x, min_y, max_x, max_y));
            }
        }
    }

    let (_, min_x, min_y, max_x, max_y) = best.ok_or(CropError::NoForeground)?;
    Ok(BBox::new(
        min_x as f64,
        min_y as f64,
        (max_x + 1) as f64,
        (max_y + 1) as f64,
    )
    .expect("component bbox has positive extent"))
}

/// Crop `bbox` expanded by `margin` pixels per side, clamped to the image.
/// Returns the sub-image and the realized crop box in source coordinates,
/// so source_coord = crop_coord + (crop_box.x1, crop_box.y1).
pub fn crop_with_margin(
    img: &GrayImage,
    bbox: &BBox,
    margin: u32,
) -> Result<(GrayImage, BBox), CropError> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    if bbox.x1 < 0.0 || bbox.y1 < 0.0 || bbox.x2 > w || bbox.y2 > h {
        return Err(CropError::BoxOutOfBounds {
            x1: bbox.x1,
            y1: bbox.y1,
            x2: bbox.x2,
            y2: bbox.y2,
            img_w: img.width(),
            img_h: img.height(),
        });
    }
    let m = margin as f64;
    let x1 = (bbox.x1 - m).floor().max(0.0);
    let y1 = (bbox.y1 - m).floor().max(0.0);
    let x2 = (bbox.x2 + m).ceil().min(w);
    let y2 = (bbox.y2 + m).ceil().min(h);
    let crop_box = BBox::new(x1, y1, x2, y2).expect("crop box inherits positive extent");
    let out = img.crop(x1 as u32, y1 as u32, (x2 - x1) as u32, (y2 - y1) as u32)?;
    Ok((out, crop_box))
}
