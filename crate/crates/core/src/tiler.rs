//! Overlapping tile decomposition of a source image, annotation projection
//! into scaled tile space, and the inverse detection mapping.
//!
//! Offsets are integers in source pixels. A tile at offset o with extent t
//! covers source pixels [o, o+t); plans guarantee every source pixel lies in
//! at least one tile.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::gray::{GrayError, GrayImage, Resample};

#[derive(Debug, Error)]
pub enum TileError {
    #[error("tile {tile_w}x{tile_h} larger than image {src_w}x{src_h}")]
    TileLargerThanImage { tile_w: u32, tile_h: u32, src_w: u32, src_h: u32 },
    #[error("grid counts must be at least 1")]
    InvalidGrid,
    #[error("overlap {ov} must be smaller than tile extent {tile}")]
    InvalidOverlap { ov: u32, tile: u32 },
    #[error("{n} tiles of extent {tile} cannot cover axis {axis} of length {len} (max gap {max_gap})")]
    GridTooSparse { axis: char, n: u32, tile: u32, len: u32, max_gap: u32 },
    #[error("scale {0} must be positive and finite")]
    InvalidScale(f64),
    #[error("tile at ({offset_x},{offset_y}) size {tile_w}x{tile_h} exceeds image {img_w}x{img_h}")]
    TileOutOfBounds { offset_x: u32, offset_y: u32, tile_w: u32, tile_h: u32, img_w: u32, img_h: u32 },
    #[error(transparent)]
    Image(#[from] GrayError),
}

/// One planned tile: placement in source space plus the post-crop scale
/// factor applied to the extracted image and its annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileSpec {
    pub source_id: String,
    pub offset_x: u32,
    pub offset_y: u32,
    pub tile_w: u32,
    pub tile_h: u32,
    pub scale: f64,
}

impl TileSpec {
    /// Tile rectangle in source coordinates.
    pub fn rect(&self) -> BBox {
        BBox::new(
            self.offset_x as f64,
            self.offset_y as f64,
            (self.offset_x + self.tile_w) as f64,
            (self.offset_y + self.tile_h) as f64,
        )
        .expect("tile extents are positive")
    }

    /// Output dimensions after scaling: round-half-up of extent·scale.
    pub fn scaled_dims(&self) -> (u32, u32) {
        let dim = |v: u32| ((v as f64 * self.scale).round() as u32).max(1);
        (dim(self.tile_w), dim(self.tile_h))
    }
}

/// Tile layout rule: a fixed tile count per axis with evenly spread offsets,
/// or a fixed overlap with as many tiles as coverage requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TileMode {
    GridCount { n_x: u32, n_y: u32 },
    Overlap { ov_x: u32, ov_y: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilePlan {
    pub source_w: u32,
    pub source_h: u32,
    /// (n_x, n_y): columns, rows.
    pub grid: (u32, u32),
    /// Row-major: index = row·n_x + col.
    pub tiles: Vec<TileSpec>,
}

impl TilePlan {
    pub fn tile_at(&self, row: u32, col: u32) -> Option<&TileSpec> {
        if col >= self.grid.0 || row >= self.grid.1 {
            return None;
        }
        self.tiles.get((row * self.grid.0 + col) as usize)
    }

    pub fn row_col(&self, index: usize) -> (u32, u32) {
        (index as u32 / self.grid.0, index as u32 % self.grid.0)
    }
}

/// File name for the tile at (row, col): {source_id}_r{row}_c{col}.png.
pub fn tile_file_name(source_id: &str, row: u32, col: u32) -> String {
    format!("{source_id}_r{row}_c{col}.png")
}

/// Evenly spread offsets: round(i·(len−tile)/(n−1)), built as mirrored pairs
/// so off_i + off_{n−1−i} = len−tile exactly for i ≠ n−1−i (the self-paired
/// center of an odd grid rounds half up and may sit half a pixel high).
fn grid_offsets(len: u32, tile: u32, n: u32, axis: char) -> Result<Vec<u32>, TileError> {
    let k = (len - tile) as u64;
    let mut off = vec![0u64; n as usize];
    if n > 1 {
        let d = (n - 1) as u64;
        for i in 0..(n / 2) as usize {
            let v = ((2 * i as u128 * k as u128 + d as u128) / (2 * d as u128)) as u64;
            off[i] = v;
            off[n as usize - 1 - i] = k - v;
        }
        if n % 2 == 1 {
            off[(n / 2) as usize] = (k + 1) / 2;
        }
    }
    check_coverage(&off, len, tile, n, axis)?;
    Ok(off.into_iter().map(|v| v as u32).collect())
}

/// Fixed-stride offsets: stride = tile−ov, count = ceil((len−tile)/stride)+1,
/// last offset clamped to len−tile.
fn overlap_offsets(len: u32, tile: u32, ov: u32, axis: char) -> Result<Vec<u32>, TileError> {
    if ov >= tile {
        return Err(TileError::InvalidOverlap { ov, tile });
    }
    let stride = (tile - ov) as u64;
    let k = (len - tile) as u64;
    let n = k.div_ceil(stride) + 1;
    let off: Vec<u64> = (0..n).map(|i| (i * stride).min(k)).collect();
    check_coverage(&off, len, tile, n as u32, axis)?;
    Ok(off.into_iter().map(|v| v as u32).collect())
}

fn check_coverage(off: &[u64], len: u32, tile: u32, n: u32, axis: char) -> Result<(), TileError> {
    debug_assert!(off.windows(2).all(|w| w[0] <= w[1]));
    let mut max_gap = 0u64;
    let mut covered_to = 0u64;
    for &o in off {
        if o > covered_to {
            max_gap = max_gap.max(o - covered_to);
        }
        covered_to = covered_to.max(o + tile as u64);
    }
    if covered_to < len as u64 {
        max_gap = max_gap.max(len as u64 - covered_to);
    }
    if max_gap > 0 {
        return Err(TileError::GridTooSparse { axis, n, tile, len, max_gap: max_gap as u32 });
    }
    Ok(())
}

/// Lay out tiles over a src_w × src_h image. Tiles are returned row-major
/// with non-decreasing offsets and cover every source pixel.
pub fn plan_tiles(
    source_id: &str,
    src_w: u32,
    src_h: u32,
    tile_w: u32,
    tile_h: u32,
    scale: f64,
    mode: TileMode,
) -> Result<TilePlan, TileError> {
    if tile_w > src_w || tile_h > src_h || tile_w == 0 || tile_h == 0 {
        return Err(TileError::TileLargerThanImage { tile_w, tile_h, src_w, src_h });
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(TileError::InvalidScale(scale));
    }
    let (xs, ys) = match mode {
        TileMode::GridCount { n_x, n_y } => {
            if n_x == 0 || n_y == 0 {
                return Err(TileError::InvalidGrid);
            }
            (
                grid_offsets(src_w, tile_w, n_x, 'x')?,
                grid_offsets(src_h, tile_h, n_y, 'y')?,
            )
        }
        TileMode::Overlap { ov_x, ov_y } => (
            overlap_offsets(src_w, tile_w, ov_x, 'x')?,
            overlap_offsets(src_h, tile_h, ov_y, 'y')?,
        ),
    };
    let mut tiles = Vec::with_capacity(xs.len() * ys.len());
    for &oy in &ys {
        for &ox in &xs {
            tiles.push(TileSpec {
                source_id: source_id.to_string(),
                offset_x: ox,
                offset_y: oy,
                tile_w,
                tile_h,
                scale,
            });
        }
    }
    Ok(TilePlan {
        source_w: src_w,
        source_h: src_h,
        grid: (xs.len() as u32, ys.len() as u32),
        tiles,
    })
}

/// Clip annotations to the tile, keep those with clipped/original area ratio
/// ≥ min_visibility, and map survivors into scaled tile coordinates.
/// Zero-area intersections are always dropped.
pub fn project_annotations_to_tile(
    annots: &[BBox],
    tile: &TileSpec,
    min_visibility: f64,
) -> Vec<BBox> {
    let rect = tile.rect();
    annots
        .iter()
        .filter_map(|a| {
            let clipped = a.clipped_to(&rect)?;
            if clipped.area() / a.area() < min_visibility {
                return None;
            }
            Some(
                clipped
                    .translated(-(tile.offset_x as f64), -(tile.offset_y as f64))
                    .scaled(tile.scale),
            )
        })
        .collect()
}

/// Map a detection from scaled tile coordinates back to source coordinates:
/// box/scale + offset. Exact inverse of projection for unclipped boxes.
pub fn detection_to_source_coords(det_box: &BBox, tile: &TileSpec) -> BBox {
    det_box
        .scaled(1.0 / tile.scale)
        .translated(tile.offset_x as f64, tile.offset_y as f64)
}

/// Extract the tile sub-image and resample it by tile.scale; output
/// dimensions are round-half-up of extent·scale. Scale 1 returns the
/// sub-image bytes unchanged.
pub fn crop_tile(img: &GrayImage, tile: &TileSpec, mode: Resample) -> Result<GrayImage, TileError> {
    if !(tile.scale.is_finite() && tile.scale > 0.0) {
        return Err(TileError::InvalidScale(tile.scale));
    }
    let in_x = tile.offset_x.checked_add(tile.tile_w).map_or(false, |r| r <= img.width());
    let in_y = tile.offset_y.checked_add(tile.tile_h).map_or(false, |b| b <= img.height());
    if !in_x || !in_y {
        return Err(TileError::TileOutOfBounds {
            offset_x: tile.offset_x,
            offset_y: tile.offset_y,
            tile_w: tile.tile_w,
            tile_h: tile.tile_h,
            img_w: img.width(),
            img_h: img.height(),
        });
    }
    let sub = img.crop(tile.offset_x, tile.offset_y, tile.tile_w, tile.tile_h)?;
    if tile.scale == 1.0 {
        return Ok(sub);
    }
    let (dw, dh) = tile.scaled_dims();
    Ok(sub.resize(dw, dh, mode)?)
}
