//! Rectangle arithmetic, anchor-shape enumeration and shape-matching IoU.
//!
//! Coordinates are continuous reals with origin at the top-left, x right,
//! y down; pixel (i, j) spans [i, i+1) × [j, j+1). Aspect ratios follow the
//! height/width convention, so ratio 0.5 is a wide shape.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid box ({x1},{y1})-({x2},{y2}): width and height must be positive")]
    InvalidBox { x1: f64, y1: f64, x2: f64, y2: f64 },
    #[error("invalid anchor config: {0}")]
    InvalidAnchorConfig(String),
}

/// Axis-aligned rectangle in pixel coordinates with strictly positive extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1.is_finite() && y1.is_finite() && x2.is_finite() && y2.is_finite())
            || x1 >= x2
            || y1 >= y2
        {
            return Err(GeometryError::InvalidBox { x1, y1, x2, y2 });
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Overlap area with `other`; 0 when disjoint or merely touching.
    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x2.min(other.x2) - self.x1.max(other.x1);
        let h = self.y2.min(other.y2) - self.y1.max(other.y1);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    /// Translate by (dx, dy).
    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    /// Scale all four coordinates about the origin.
    pub fn scaled(&self, factor: f64) -> BBox {
        BBox {
            x1: self.x1 * factor,
            y1: self.y1 * factor,
            x2: self.x2 * factor,
            y2: self.y2 * factor,
        }
    }

    /// Intersection with `other`, or None when the overlap is empty.
    pub fn clipped_to(&self, other: &BBox) -> Option<BBox> {
        let x1 = self.x1.max(other.x1);
        let y1 = self.y1.max(other.y1);
        let x2 = self.x2.min(other.x2);
        let y2 = self.y2.min(other.y2);
        if x1 < x2 && y1 < y2 {
            Some(BBox { x1, y1, x2, y2 })
        } else {
            None
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> [f64; 4] {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

/// Intersection over union of two boxes. Symmetric, in [0, 1], and 0 for
/// disjoint boxes.
pub fn iou_pair(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter == 0.0 {
        return 0.0;
    }
    inter / (a.area() + b.area() - inter)
}

/// Base sizes, aspect ratios (height/width) and scales defining a detector's
/// anchor shape set. The induced set has |sizes|·|ratios|·|scales| shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub sizes: Vec<f64>,
    pub ratios: Vec<f64>,
    pub scales: Vec<f64>,
}

impl AnchorConfig {
    pub fn new(sizes: Vec<f64>, ratios: Vec<f64>, scales: Vec<f64>) -> Result<Self, GeometryError> {
        let check = |name: &str, xs: &[f64]| -> Result<(), GeometryError> {
            if xs.is_empty() {
                return Err(GeometryError::InvalidAnchorConfig(format!("{name} is empty")));
            }
            if xs.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(GeometryError::InvalidAnchorConfig(format!(
                    "{name} must be strictly positive"
                )));
            }
            Ok(())
        };
        check("sizes", &sizes)?;
        check("ratios", &ratios)?;
        check("scales", &scales)?;
        Ok(Self { sizes, ratios, scales })
    }

    /// The stock RetinaNet-style configuration: sizes 32..512, ratios
    /// (0.5, 1, 2), scales (1, 1.2, 1.6).
    pub fn default_retina() -> Self {
        Self {
            sizes: vec![32.0, 64.0, 128.0, 256.0, 512.0],
            ratios: vec![0.5, 1.0, 2.0],
            scales: vec![1.0, 1.2, 1.6],
        }
    }

    pub fn shape_count(&self) -> usize {
        self.sizes.len() * self.ratios.len() * self.scales.len()
    }
}

/// One anchor's width and height in pixels.
///
/// For base size b, ratio ρ and scale s: width = b·s/√ρ, height = b·s·√ρ,
/// so width·height = (b·s)² regardless of ρ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorShape {
    pub width: f64,
    pub height: f64,
}

impl AnchorShape {
    pub fn from_params(size: f64, ratio: f64, scale: f64) -> Self {
        let root = ratio.sqrt();
        AnchorShape {
            width: size * scale / root,
            height: size * scale * root,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }
}

/// All shapes induced by `cfg`, size-major, then ratio, then scale.
pub fn anchor_shapes(cfg: &AnchorConfig) -> Vec<AnchorShape> {
    let mut shapes = Vec::with_capacity(cfg.shape_count());
    for &size in &cfg.sizes {
        for &ratio in &cfg.ratios {
            for &scale in &cfg.scales {
                shapes.push(AnchorShape::from_params(size, ratio, scale));
            }
        }
    }
    shapes
}

/// IoU between a w×h box and a concentric anchor shape: translation is
/// handled by dense anchor placement, so only the shapes are compared and
/// the intersection is min(w, wa)·min(h, ha).
pub fn centered_iou(box_w: f64, box_h: f64, shape: &AnchorShape) -> f64 {
    let inter = box_w.min(shape.width) * box_h.min(shape.height);
    inter / (box_w * box_h + shape.area() - inter)
}

/// Best concentric IoU a box of the given size reaches over all shapes of
/// `cfg`. Returns 1 exactly when some shape equals (box_w, box_h).
pub fn centered_max_iou(box_w: f64, box_h: f64, cfg: &AnchorConfig) -> f64 {
    let mut best = 0.0f64;
    for &size in &cfg.sizes {
        for &ratio in &cfg.ratios {
            for &scale in &cfg.scales {
                let shape = AnchorShape::from_params(size, ratio, scale);
                best = best.max(centered_iou(box_w, box_h, &shape));
            }
        }
    }
    best
}
