//! Detection evaluation: greedy NMS, score-greedy matching, all-point
//! interpolated average precision, and an image-level accuracy metric that
//! judges each image by detection count and union-IoU conditions.

mod union;

pub use union::{union_area, union_iou};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Manifest;
use crate::geometry::{iou_pair, BBox};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot open {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("union IoU of two empty box sets is undefined")]
    BothEmpty,
    #[error("no class has a defined AP (every class has zero ground-truth boxes)")]
    NoDefinedClasses,
    #[error("detections reference image {0:?} absent from the annotation manifest")]
    UnknownImage(String),
}

/// One detector output box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub bbox: BBox,
    pub class: String,
    pub score: f64,
}

/// Greedy non-maximum suppression within one image: repeatedly keep the
/// highest-score remaining detection and discard same-class detections with
/// IoU strictly above the threshold. Score ties prefer the larger area, then
/// earlier input position. Output is sorted by descending score.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .expect("scores are finite")
            .then(
                dets[b]
                    .bbox
                    .area()
                    .partial_cmp(&dets[a].bbox.area())
                    .expect("areas are finite"),
            )
            .then(a.cmp(&b))
    });
    let mut suppressed = vec![false; dets.len()];
    let mut out = Vec::new();
    for (pos, &i) in order.iter().enumerate() {
        if suppressed[i] {
            continue;
        }
        out.push(dets[i].clone());
        for &j in &order[pos + 1..] {
            if !suppressed[j]
                && dets[j].class == dets[i].class
                && iou_pair(&dets[i].bbox, &dets[j].bbox) > iou_threshold
            {
                suppressed[j] = true;
            }
        }
    }
    out
}

/// TP/FP labels for one image and one class.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    /// (score, is_true_positive) in descending score order.
    pub labels: Vec<(f64, bool)>,
    pub false_negatives: usize,
}

/// Greedy matching by descending score: a detection is a true positive when
/// its best-IoU unmatched ground-truth box of the same class reaches the
/// threshold; each ground-truth box matches at most once.
pub fn match_detections(
    dets: &[Detection],
    gts: &[(BBox, String)],
    iou_threshold: f64,
) -> MatchOutcome {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b].score.partial_cmp(&dets[a].score).expect("scores are finite").then(a.cmp(&b))
    });
    let mut matched = vec![false; gts.len()];
    let mut labels = Vec::with_capacity(dets.len());
    for &i in &order {
        let det = &dets[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, (gbox, gclass)) in gts.iter().enumerate() {
            if matched[g] || *gclass != det.class {
                continue;
            }
            let iou = iou_pair(&det.bbox, gbox);
            if best.map_or(true, |(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let is_tp = match best {
            Some((g, iou)) if iou >= iou_threshold => {
                matched[g] = true;
                true
            }
            _ => false,
        };
        labels.push((det.score, is_tp));
    }
    let false_negatives = matched.iter().filter(|&&m| !m).count();
    MatchOutcome { labels, false_negatives }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApResult {
    pub ap: f64,
    /// False when the class has zero ground-truth boxes; such classes are
    /// excluded from the mean.
    pub defined: bool,
}

/// All-point interpolated average precision from (score, is_tp) labels.
/// Precision at each prefix is interpolated to its running maximum from the
/// right; AP sums precision over recall increments.
pub fn average_precision(labels: &[(f64, bool)], n_gt: usize) -> ApResult {
    let defined = n_gt > 0;
    if !defined || labels.is_empty() {
        return ApResult { ap: 0.0, defined };
    }
    let mut sorted = labels.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("scores are finite"));
    let n = sorted.len();
    let mut precisions = Vec::with_capacity(n);
    let mut recalls = Vec::with_capacity(n);
    let mut tp = 0usize;
    for (k, &(_, is_tp)) in sorted.iter().enumerate() {
        if is_tp {
            tp += 1;
        }
        precisions.push(tp as f64 / (k + 1) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }
    let mut envelope = precisions;
    for i in (0..n - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for i in 0..n {
        if recalls[i] > prev_recall {
            ap += (recalls[i] - prev_recall) * envelope[i];
            prev_recall = recalls[i];
        }
    }
    ApResult { ap, defined }
}

/// Arithmetic mean of AP over classes with at least one ground-truth box.
pub fn mean_average_precision(per_class: &BTreeMap<String, ApResult>) -> Result<f64, EvalError> {
    let defined: Vec<f64> = per_class.values().filter(|r| r.defined).map(|r| r.ap).collect();
    if defined.is_empty() {
        return Err(EvalError::NoDefinedClasses);
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Ground truth and detections of one image, ready for the accuracy metric.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub id: String,
    pub gt_boxes: Vec<BBox>,
    pub detections: Vec<Detection>,
}

/// Accuracy verdict for one image. For a positive image (≥ 1 annotation),
/// cond_count is |D| ≥ 0.5·|A| and cond_union_iou is
/// union_iou(annotations, D) > union_iou_min, where D are the detections at
/// or above the score threshold; the verdict is correct only if both hold.
/// For a negative image cond_count is |D| = 0 (the whole verdict) and
/// cond_union_iou is None.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub id: String,
    pub correct: bool,
    pub cond_count: bool,
    pub cond_union_iou: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub per_image: Vec<ImageVerdict>,
    /// Fraction of images judged correct; 1.0 for an empty image list.
    pub accuracy: f64,
}

/// The image-level accuracy metric. Detections below score_threshold are
/// ignored; class labels are not consulted (the metric is class-agnostic).
pub fn image_level_accuracy(
    images: &[ImageEval],
    score_threshold: f64,
    union_iou_min: f64,
) -> AccuracyReport {
    let mut per_image = Vec::with_capacity(images.len());
    let mut correct_count = 0usize;
    for img in images {
        let d_boxes: Vec<BBox> = img
            .detections
            .iter()
            .filter(|d| d.score >= score_threshold)
            .map(|d| d.bbox)
            .collect();
        let verdict = if img.gt_boxes.is_empty() {
            ImageVerdict {
                id: img.id.clone(),
                correct: d_boxes.is_empty(),
                cond_count: d_boxes.is_empty(),
                cond_union_iou: None,
            }
        } else {
            let cond_count = d_boxes.len() as f64 >= 0.5 * img.gt_boxes.len() as f64;
            let iou = union_iou(&img.gt_boxes, &d_boxes).expect("ground truth is non-empty");
            let cond_union_iou = iou > union_iou_min;
            ImageVerdict {
                id: img.id.clone(),
                correct: cond_count && cond_union_iou,
                cond_count,
                cond_union_iou: Some(cond_union_iou),
            }
        };
        correct_count += verdict.correct as usize;
        per_image.push(verdict);
    }
    let accuracy = if images.is_empty() {
        1.0
    } else {
        correct_count as f64 / images.len() as f64
    };
    AccuracyReport { per_image, accuracy }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// IoU threshold for TP/FP matching.
    pub match_iou: f64,
    /// Minimum score for a detection to count toward the accuracy metric.
    pub score_threshold: f64,
    /// union_iou must exceed this for a positive image to be correct.
    pub union_iou_min: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { match_iou: 0.5, score_threshold: 0.5, union_iou_min: 0.2 }
    }
}

/// Full evaluation report; `map` averages AP over classes with ground truth,
/// and the TP/FP/FN counts are taken at the matching threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub per_class_ap: BTreeMap<String, f64>,
    pub per_image: Vec<ImageVerdict>,
    pub accuracy: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

/// Evaluate merged, source-space detections against an annotation manifest.
/// Every detection must reference a manifest image; images follow manifest
/// order in the report.
pub fn evaluate(
    manifest: &Manifest,
    detections: &[Detection],
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    let known: HashMap<&str, usize> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.image_path.as_str(), i))
        .collect();
    let mut dets_by_image: Vec<Vec<&Detection>> = vec![Vec::new(); manifest.records.len()];
    for d in detections {
        match known.get(d.image_id.as_str()) {
            Some(&i) => dets_by_image[i].push(d),
            None => return Err(EvalError::UnknownImage(d.image_id.clone())),
        }
    }

    let mut classes: BTreeSet<String> = BTreeSet::new();
    for r in &manifest.records {
        classes.extend(r.boxes.iter().map(|b| b.class.clone()));
    }
    for d in detections {
        classes.insert(d.class.clone());
    }

    let mut per_class = BTreeMap::new();
    let (mut tp_total, mut fp_total, mut fn_total) = (0usize, 0usize, 0usize);
    for class in &classes {
        let mut labels = Vec::new();
        let mut n_gt = 0usize;
        for (i, r) in manifest.records.iter().enumerate() {
            let gts: Vec<(BBox, String)> = r
                .boxes
                .iter()
                .filter(|b| &b.class == class)
                .map(|b| (b.bbox, b.class.clone()))
                .collect();
            let dets: Vec<Detection> = dets_by_image[i]
                .iter()
                .filter(|d| &d.class == class)
                .map(|&d| d.clone())
                .collect();
            n_gt += gts.len();
            let outcome = match_detections(&dets, &gts, cfg.match_iou);
            tp_total += outcome.labels.iter().filter(|(_, tp)| *tp).count();
            fp_total += outcome.labels.iter().filter(|(_, tp)| !tp).count();
            fn_total += outcome.false_negatives;
            labels.extend(outcome.labels);
        }
        per_class.insert(class.clone(), average_precision(&labels, n_gt));
    }
    let map = mean_average_precision(&per_class)?;

    let images: Vec<ImageEval> = manifest
        .records
        .iter()
        .enumerate()
        .map(|(i, r)| ImageEval {
            id: r.image_path.clone(),
            gt_boxes: r.boxes.iter().map(|b| b.bbox).collect(),
            detections: dets_by_image[i].iter().map(|&d| d.clone()).collect(),
        })
        .collect();
    let acc = image_level_accuracy(&images, cfg.score_threshold, cfg.union_iou_min);

    Ok(EvalReport {
        map,
        per_class_ap: per_class
            .into_iter()
            .filter(|(_, r)| r.defined)
            .map(|(c, r)| (c, r.ap))
            .collect(),
        per_image: acc.per_image,
        accuracy: acc.accuracy,
        true_positives: tp_total,
        false_positives: fp_total,
        false_negatives: fn_total,
    })
}

/// Parse detections CSV: `image_path,x1,y1,x2,y2,class,score` with scores
/// in [0, 1]. Errors carry 1-based line numbers.
pub fn parse_detections_csv(reader: impl BufRead) -> Result<Vec<Detection>, EvalError> {
    let mut out = Vec::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|source| EvalError::Io { path: "<csv>".into(), source })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(EvalError::MalformedLine {
                line: line_no,
                reason: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[5].is_empty() {
            return Err(EvalError::MalformedLine {
                line: line_no,
                reason: "image path and class must be non-empty".into(),
            });
        }
        let mut nums = [0f64; 5];
        for (i, f) in fields[1..=4].iter().chain([&fields[6]]).enumerate() {
            nums[i] = f.parse().map_err(|_| EvalError::MalformedLine {
                line: line_no,
                reason: format!("non-numeric field {f:?}"),
            })?;
        }
        let bbox = BBox::new(nums[0], nums[1], nums[2], nums[3])
            .map_err(|e| EvalError::MalformedLine { line: line_no, reason: e.to_string() })?;
        let score = nums[4];
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::MalformedLine {
                line: line_no,
                reason: format!("score {score} outside [0, 1]"),
            });
        }
        out.push(Detection {
            image_id: fields[0].to_string(),
            bbox,
            class: fields[5].to_string(),
            score,
        });
    }
    Ok(out)
}

pub fn read_detections_csv(path: &Path) -> Result<Vec<Detection>, EvalError> {
    let file = std::fs::File::open(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_detections_csv(std::io::BufReader::new(file))
}

/// Render detections as CSV; parses back to equal values.
pub fn detections_to_csv(dets: &[Detection]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for d in dets {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.image_id, d.bbox.x1, d.bbox.y1, d.bbox.x2, d.bbox.y2, d.class, d.score
        );
    }
    out
}
