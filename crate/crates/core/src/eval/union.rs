//! Exact area of rectangle unions via coordinate compression: the x/y
//! coordinates of all boxes induce a grid whose cells are each either fully
//! inside or fully outside every box, so summing covered cells is exact up
//! to float rounding of the products, with no rasterization error.

use crate::geometry::BBox;

use super::EvalError;

fn compressed_axes(box_sets: &[&[BBox]]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for set in box_sets {
        for b in *set {
            xs.push(b.x1);
            xs.push(b.x2);
            ys.push(b.y1);
            ys.push(b.y2);
        }
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("box coordinates are finite"));
    xs.dedup();
    ys.sort_by(|a, b| a.partial_cmp(b).expect("box coordinates are finite"));
    ys.dedup();
    (xs, ys)
}

/// Cell coverage mask for one box set on the compressed grid, row-major over
/// (ys.len()−1) rows × (xs.len()−1) columns.
fn coverage(boxes: &[BBox], xs: &[f64], ys: &[f64]) -> Vec<bool> {
    let cols = xs.len().saturating_sub(1);
    let rows = ys.len().saturating_sub(1);
    let mut mask = vec![false; cols * rows];
    for b in boxes {
        let i0 = xs.partition_point(|&v| v < b.x1);
        let i1 = xs.partition_point(|&v| v < b.x2);
        let j0 = ys.partition_point(|&v| v < b.y1);
        let j1 = ys.partition_point(|&v| v < b.y2);
        for j in j0..j1 {
            for i in i0..i1 {
                mask[j * cols + i] = true;
            }
        }
    }
    mask
}

fn masked_area(mask: &[bool], xs: &[f64], ys: &[f64]) -> f64 {
    let cols = xs.len() - 1;
    let mut area = 0.0;
    for j in 0..ys.len() - 1 {
        let dy = ys[j + 1] - ys[j];
        for i in 0..cols {
            if mask[j * cols + i] {
                area += (xs[i + 1] - xs[i]) * dy;
            }
        }
    }
    area
}

/// Area of the union of `boxes`; 0 for an empty list. Exact for
/// integer-coordinate boxes.
pub fn union_area(boxes: &[BBox]) -> f64 {
    if boxes.is_empty() {
        return 0.0;
    }
    let (xs, ys) = compressed_axes(&[boxes]);
    let mask = coverage(boxes, &xs, &ys);
    masked_area(&mask, &xs, &ys)
}

/// IoU between the union of `g_boxes` and the union of `s_boxes`, both
/// computed on the joint compressed grid. One empty side gives 0; both empty
/// is an error because the ratio is undefined.
pub fn union_iou(g_boxes: &[BBox], s_boxes: &[BBox]) -> Result<f64, EvalError> {
    if g_boxes.is_empty() && s_boxes.is_empty() {
        return Err(EvalError::BothEmpty);
    }
    let (xs, ys) = compressed_axes(&[g_boxes, s_boxes]);
    let g_mask = coverage(g_boxes, &xs, &ys);
    let s_mask = coverage(s_boxes, &xs, &ys);
    let cols = xs.len() - 1;
    let (mut inter, mut union) = (0.0, 0.0);
    for j in 0..ys.len() - 1 {
        let dy = ys[j + 1] - ys[j];
        for i in 0..cols {
            let cell = (xs[i + 1] - xs[i]) * dy;
            match (g_mask[j * cols + i], s_mask[j * cols + i]) {
                (true, true) => {
                    inter += cell;
                    union += cell;
                }
                (true, false) | (false, true) => union += cell,
                (false, false) => {}
            }
        }
    }
    Ok(inter / union)
}
