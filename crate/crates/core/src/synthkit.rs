//! Deterministic synthetic scan generator and a controllable detector
//! stand-in. Scans show a bright convex blade-like region on a dark
//! background with small darker elliptical defects; exact ground-truth boxes
//! come back alongside the pixels, so pipeline tests need no real data.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::eval::Detection;
use crate::geometry::BBox;
use crate::gray::GrayImage;

/// Class label carried by every synthetic annotation and oracle detection.
pub const SYNTH_CLASS: &str = "defect";

/// Recipe for one synthetic scan. Same spec (seed included) always produces
/// identical pixels and boxes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub width: u32,
    pub height: u32,
    /// Fraction of each canvas dimension spanned by the blade envelope.
    pub blade_scale: f64,
    /// Defect count is uniform on 0..=defect_count_max.
    pub defect_count_max: u32,
    pub mean_defect_w: f64,
    pub mean_defect_h: f64,
    /// Sizes are uniform on mean ± jitter.
    pub defect_jitter_w: f64,
    pub defect_jitter_h: f64,
    pub background_intensity: u8,
    pub blade_intensity: u8,
    pub defect_intensity: u8,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 1200,
            height: 1500,
            blade_scale: 0.8,
            defect_count_max: 5,
            mean_defect_w: 14.0,
            mean_defect_h: 18.0,
            defect_jitter_w: 3.0,
            defect_jitter_h: 4.0,
            background_intensity: 30,
            blade_intensity: 200,
            defect_intensity: 140,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Monotone-chain convex hull, counterclockwise in the coordinate algebra
/// (collinear points dropped).
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup();
    if pts.len() <= 2 {
        return pts;
    }
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Pixel-center x-interval of a convex polygon on row `y`, or None when the
/// row misses the polygon. Hull vertices must be counterclockwise.
fn row_interval(hull: &[(f64, f64)], y: u32, width: u32) -> Option<(u32, u32)> {
    let py = y as f64 + 0.5;
    let mut lo = 0.5_f64;
    let mut hi = width as f64 - 0.5;
    for i in 0..hull.len() {
        let (ex, ey) = hull[i];
        let (fx, fy) = hull[(i + 1) % hull.len()];
        // interior of a CCW polygon satisfies a*px + b >= 0 per edge
        let a = -(fy - ey);
        let b = (fx - ex) * (py - ey) + (fy - ey) * ex;
        if a == 0.0 {
            if b < 0.0 {
                return None;
            }
        } else if a > 0.0 {
            lo = lo.max(-b / a);
        } else {
            hi = hi.min(-b / a);
        }
    }
    if lo > hi {
        return None;
    }
    let x0 = (lo - 0.5).ceil().max(0.0) as u32;
    let x1 = ((hi - 0.5).floor() as i64).min(width as i64 - 1);
    if x1 < x0 as i64 {
        None
    } else {
        Some((x0, x1 as u32))
    }
}

/// Render one synthetic scan. Returns the image and the tight pixel bounding
/// box of every defect; boxes lie strictly inside the blade region and keep
/// a 2 px gap from each other.
pub fn generate_synthetic_scan(spec: &SynthSpec) -> (GrayImage, Vec<BBox>) {
    assert!(spec.width >= 64 && spec.height >= 64, "canvas must be at least 64x64");
    assert!(
        spec.blade_scale > 0.0 && spec.blade_scale <= 1.0,
        "blade_scale must be in (0, 1]"
    );
    assert!(
        spec.defect_jitter_w >= 0.0
            && spec.defect_jitter_h >= 0.0
            && spec.mean_defect_w - spec.defect_jitter_w >= 2.0
            && spec.mean_defect_h - spec.defect_jitter_h >= 2.0,
        "defect sizes must stay at least 2 px"
    );
    assert!(
        spec.background_intensity != spec.blade_intensity
            && spec.defect_intensity != spec.blade_intensity
            && spec.defect_intensity != spec.background_intensity,
        "intensity levels must be distinct"
    );

    let (w, h) = (spec.width, spec.height);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pixels = vec![spec.background_intensity; (w as usize) * (h as usize)];

    // blade envelope, pinned by four forced extreme points so the hull spans
    // it for every seed
    let mx = w as f64 * (1.0 - spec.blade_scale) / 2.0;
    let my = h as f64 * (1.0 - spec.blade_scale) / 2.0;
    let (cx_mid, cy_mid) = (w as f64 / 2.0, h as f64 / 2.0);
    let mut pts = vec![
        (mx, cy_mid),
        (w as f64 - mx, cy_mid),
        (cx_mid, my),
        (cx_mid, h as f64 - my),
    ];
    for _ in 0..8 {
        pts.push((rng.gen_range(mx..=w as f64 - mx), rng.gen_range(my..=h as f64 - my)));
    }
    let hull = convex_hull(pts);

    for y in 0..h {
        if let Some((x0, x1)) = row_interval(&hull, y, w) {
            let row = (y as usize) * (w as usize);
            pixels[row + x0 as usize..=row + x1 as usize].fill(spec.blade_intensity);
        }
    }

    let count = rng.gen_range(0..=spec.defect_count_max);
    let mut boxes = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let dw = rng.gen_range(
            spec.mean_defect_w - spec.defect_jitter_w..=spec.mean_defect_w + spec.defect_jitter_w,
        );
        let dh = rng.gen_range(
            spec.mean_defect_h - spec.defect_jitter_h..=spec.mean_defect_h + spec.defect_jitter_h,
        );
        let (rx, ry) = (dw / 2.0, dh / 2.0);
        let cx_lo = mx + rx + 3.0;
        let cx_hi = w as f64 - mx - rx - 3.0;
        let cy_lo = my + ry + 3.0;
        let cy_hi = h as f64 - my - ry - 3.0;
        if cx_lo > cx_hi || cy_lo > cy_hi {
            continue;
        }
        for _attempt in 0..100 {
            let cx = rng.gen_range(cx_lo..=cx_hi);
            let cy = rng.gen_range(cy_lo..=cy_hi);
            // the analytic bbox plus a 2 px gap must sit on untouched blade;
            // that keeps the defect inside the blade and disjoint from
            // earlier defects in a single check
            let gx0 = (cx - rx - 2.0).floor().max(0.0) as u32;
            let gy0 = (cy - ry - 2.0).floor().max(0.0) as u32;
            let gx1 = ((cx + rx + 2.0).ceil() as u32).min(w);
            let gy1 = ((cy + ry + 2.0).ceil() as u32).min(h);
            let clear = (gy0..gy1).all(|y| {
                let row = (y as usize) * (w as usize);
                pixels[row + gx0 as usize..row + gx1 as usize]
                    .iter()
                    .all(|&p| p == spec.blade_intensity)
            });
            if !clear {
                continue;
            }
            let (mut min_x, mut min_y, mut max_x, mut max_y) = (u32::MAX, u32::MAX, 0u32, 0u32);
            for y in gy0..gy1 {
                for x in gx0..gx1 {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        pixels[(y as usize) * (w as usize) + x as usize] = spec.defect_intensity;
                        min_x = min_x.min(x);
                        min_y = min_y.min(y);
                        max_x = max_x.max(x);
                        max_y = max_y.max(y);
                    }
                }
            }
            if min_x != u32::MAX {
                boxes.push(
                    BBox::new(
                        min_x as f64,
                        min_y as f64,
                        (max_x + 1) as f64,
                        (max_y + 1) as f64,
                    )
                    .expect("rendered defect has positive extent"),
                );
                break;
            }
        }
    }

    let image = GrayImage::from_u8(w, h, pixels).expect("canvas is non-empty");
    (image, boxes)
}

/// Detector stand-in with dial-a-failure controls. Each ground-truth box is
/// dropped with probability `drop_rate`, otherwise emitted with every
/// coordinate perturbed by up to ±jitter and a score in [0.6, 1); then
/// Poisson(fp_rate·|gts| + fp_rate) false positives with scores in [0, 0.6)
/// are scattered over the canvas. Deterministic by seed.
pub fn oracle_detector(
    image_id: &str,
    gts: &[BBox],
    canvas_w: u32,
    canvas_h: u32,
    jitter: f64,
    drop_rate: f64,
    fp_rate: f64,
    seed: u64,
) -> Vec<Detection> {
    assert!(jitter >= 0.0, "jitter must be non-negative");
    assert!((0.0..=1.0).contains(&drop_rate), "drop_rate must be in [0, 1]");
    assert!((0.0..=1.0).contains(&fp_rate), "fp_rate must be in [0, 1]");
    assert!(canvas_w >= 2 && canvas_h >= 2, "canvas too small for detections");

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for gt in gts {
        if rng.gen_range(0.0..1.0) < drop_rate {
            continue;
        }
        let mut c = [gt.x1, gt.y1, gt.x2, gt.y2];
        for v in &mut c {
            *v += rng.gen_range(-jitter..=jitter);
        }
        c[0] = c[0].clamp(0.0, canvas_w as f64);
        c[2] = c[2].clamp(0.0, canvas_w as f64);
        c[1] = c[1].clamp(0.0, canvas_h as f64);
        c[3] = c[3].clamp(0.0, canvas_h as f64);
        // heavy jitter can invert an edge pair; fall back to the true box
        let bbox = BBox::new(c[0], c[1], c[2], c[3]).unwrap_or(*gt);
        out.push(Detection {
            image_id: image_id.to_string(),
            bbox,
            class: SYNTH_CLASS.to_string(),
            score: rng.gen_range(0.6..1.0),
        });
    }

    let lambda = fp_rate * gts.len() as f64 + fp_rate;
    for _ in 0..poisson(lambda, &mut rng) {
        let fw = rng.gen_range(6.0..=24.0_f64).min(canvas_w as f64 - 1.0);
        let fh = rng.gen_range(8.0..=30.0_f64).min(canvas_h as f64 - 1.0);
        let x1 = rng.gen_range(0.0..=canvas_w as f64 - fw);
        let y1 = rng.gen_range(0.0..=canvas_h as f64 - fh);
        out.push(Detection {
            image_id: image_id.to_string(),
            bbox: BBox::new(x1, y1, x1 + fw, y1 + fh).expect("positive extent"),
            class: SYNTH_CLASS.to_string(),
            score: rng.gen_range(0.0..0.6),
        });
    }
    out
}

/// Knuth's product-of-uniforms Poisson sampler; fine for the small rates
/// used here.
fn poisson(lambda: f64, rng: &mut ChaCha8Rng) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let l = (-lambda).exp();
    let mut k = 0u64;
    let mut p = 1.0;
    loop {
        p *= rng.gen_range(0.0..1.0);
        if p <= l {
            return k;
        }
        k += 1;
    }
}

/// FNV-1a 64-bit hash; used to derive stable per-item seeds from names.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AnnotationRecord, LabeledBox, Manifest};
    use crate::eval::{evaluate, EvalConfig};
    use std::collections::BTreeSet;

    fn small_spec(seed: u64) -> SynthSpec {
        SynthSpec { width: 400, height: 500, ..SynthSpec::default() }.with_seed(seed)
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let spec = small_spec(42);
        let (img_a, boxes_a) = generate_synthetic_scan(&spec);
        let (img_b, boxes_b) = generate_synthetic_scan(&spec);
        assert_eq!(img_a.pixels(), img_b.pixels());
        assert_eq!(boxes_a, boxes_b);
    }

    #[test]
    fn zero_defects_gives_two_intensity_populations() {
        let spec = SynthSpec { defect_count_max: 0, ..small_spec(7) };
        let (img, boxes) = generate_synthetic_scan(&spec);
        assert!(boxes.is_empty());
        let mut seen = BTreeSet::new();
        for y in 0..img.height() {
            for x in 0..img.width() {
                seen.insert(img.get(x, y));
            }
        }
        assert_eq!(seen, BTreeSet::from([30u16, 200u16]));
    }

    #[test]
    fn boxes_are_tight_inside_blade_and_disjoint() {
        for seed in 0..16 {
            let (img, boxes) = generate_synthetic_scan(&small_spec(seed));
            for b in &boxes {
                assert!(b.x1 >= 0.0 && b.y1 >= 0.0);
                assert!(b.x2 <= img.width() as f64 && b.y2 <= img.height() as f64);
                let (x1, y1, x2, y2) =
                    (b.x1 as u32, b.y1 as u32, b.x2 as u32, b.y2 as u32);
                // tight: every border row/column of the box holds a defect pixel
                assert!((x1..x2).any(|x| img.get(x, y1) == 140));
                assert!((x1..x2).any(|x| img.get(x, y2 - 1) == 140));
                assert!((y1..y2).any(|y| img.get(x1, y) == 140));
                assert!((y1..y2).any(|y| img.get(x2 - 1, y) == 140));
                // inside the blade: the 2 px surround is blade, never background
                for y in y1.saturating_sub(2)..(y2 + 2).min(img.height()) {
                    for x in x1.saturating_sub(2)..(x2 + 2).min(img.width()) {
                        assert_ne!(img.get(x, y), 30, "defect box touches background");
                    }
                }
            }
            // every defect pixel lies inside some declared box
            for y in 0..img.height() {
                for x in 0..img.width() {
                    if img.get(x, y) == 140 {
                        assert!(boxes.iter().any(|b| {
                            (x as f64) >= b.x1
                                && (x as f64) < b.x2
                                && (y as f64) >= b.y1
                                && (y as f64) < b.y2
                        }));
                    }
                }
            }
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    assert_eq!(boxes[i].intersection_area(&boxes[j]), 0.0);
                }
            }
        }
    }

    #[test]
    fn mean_defect_size_tracks_the_spec_distribution() {
        let mut sum_w = 0.0;
        let mut sum_h = 0.0;
        let mut n = 0usize;
        for seed in 0..1000 {
            let (_, boxes) = generate_synthetic_scan(&small_spec(seed));
            for b in &boxes {
                sum_w += b.width();
                sum_h += b.height();
                n += 1;
            }
        }
        let (mean_w, mean_h) = (sum_w / n as f64, sum_h / n as f64);
        assert!(n > 1000, "expected a few defects per scan, got {n}");
        assert!((mean_w - 14.0).abs() / 14.0 < 0.05, "mean width {mean_w}");
        assert!((mean_h - 18.0).abs() / 18.0 < 0.05, "mean height {mean_h}");
    }

    #[test]
    fn oracle_identity_when_all_dials_are_zero() {
        let (_, boxes) = generate_synthetic_scan(&small_spec(3));
        assert!(!boxes.is_empty());
        let dets = oracle_detector("scan_3", &boxes, 400, 500, 0.0, 0.0, 0.0, 99);
        assert_eq!(dets.len(), boxes.len());
        for (d, gt) in dets.iter().zip(&boxes) {
            assert_eq!(d.bbox, *gt);
            assert_eq!(d.image_id, "scan_3");
            assert_eq!(d.class, SYNTH_CLASS);
            assert!((0.6..1.0).contains(&d.score));
        }
    }

    #[test]
    fn oracle_drop_rate_one_detects_nothing() {
        let (_, boxes) = generate_synthetic_scan(&small_spec(3));
        assert!(oracle_detector("s", &boxes, 400, 500, 0.0, 1.0, 0.0, 1).is_empty());
    }

    #[test]
    fn oracle_false_positives_stay_on_canvas_with_low_scores() {
        let dets = oracle_detector("s", &[], 400, 500, 0.0, 0.0, 1.0, 5);
        for d in &dets {
            assert!(d.bbox.x1 >= 0.0 && d.bbox.x2 <= 400.0);
            assert!(d.bbox.y1 >= 0.0 && d.bbox.y2 <= 500.0);
            assert!(d.score < 0.6);
        }
        // lambda = 1: across seeds at least one draw must produce an FP
        let any = (0..20).any(|s| !oracle_detector("s", &[], 400, 500, 0.0, 0.0, 1.0, s).is_empty());
        assert!(any);
    }

    #[test]
    fn oracle_is_deterministic_by_seed() {
        let (_, boxes) = generate_synthetic_scan(&small_spec(8));
        let a = oracle_detector("s", &boxes, 400, 500, 1.5, 0.3, 0.5, 12);
        let b = oracle_detector("s", &boxes, 400, 500, 1.5, 0.3, 0.5, 12);
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_oracle_is_an_eval_fixed_point() {
        let mut records = Vec::new();
        let mut dets = Vec::new();
        for seed in 0..6 {
            let id = format!("scan_{seed}");
            let (_, boxes) = generate_synthetic_scan(&small_spec(seed));
            dets.extend(oracle_detector(&id, &boxes, 400, 500, 0.0, 0.0, 0.0, seed));
            records.push(AnnotationRecord {
                image_path: id.clone(),
                boxes: boxes
                    .iter()
                    .map(|&bbox| LabeledBox { bbox, class: SYNTH_CLASS.to_string() })
                    .collect(),
                group_id: id,
            });
        }
        let manifest = Manifest { records };
        assert!(manifest.positive_count() > 0);
        let report = evaluate(&manifest, &dets, &EvalConfig::default()).unwrap();
        assert_eq!(report.map, 1.0);
        assert_eq!(report.accuracy, 1.0);
        assert_eq!(report.false_positives, 0);
        assert_eq!(report.false_negatives, 0);
    }

    #[test]
    fn fnv1a64_matches_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }
}
