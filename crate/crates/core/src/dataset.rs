//! Annotation manifests: CSV ingestion, positive/negative balancing,
//! leakage-free grouped k-fold splitting and normalized-area statistics.
//!
//! CSV lines are `image_path,x1,y1,x2,y2,class[,group]`. A line with empty
//! coordinate and class fields declares a negative image. Multiple lines per
//! image accumulate boxes; the optional seventh field overrides the group id,
//! which otherwise derives from the file stem with any `_r<row>_c<col>` tile
//! suffix removed, so tiles of one source image share a group.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot open {path}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("manifest has no positive records")]
    NoPositives,
    #[error("ratio {0} must be finite and non-negative")]
    InvalidRatio(f64),
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("{groups} distinct groups cannot fill {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("reference area {0} must be positive")]
    InvalidReference(f64),
    #[error("bin edges must hold at least 2 strictly increasing values")]
    InvalidBins,
}

/// One annotated box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub bbox: BBox,
    pub class: String,
}

/// All annotations of one image. Empty `boxes` marks a negative image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_path: String,
    pub boxes: Vec<LabeledBox>,
    pub group_id: String,
}

impl AnnotationRecord {
    pub fn is_positive(&self) -> bool {
        !self.boxes.is_empty()
    }
}

/// Ordered record collection; order is first appearance in the source CSV
/// and is preserved by every transformation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub records: Vec<AnnotationRecord>,
}

impl Manifest {
    pub fn positive_count(&self) -> usize {
        self.records.iter().filter(|r| r.is_positive()).count()
    }

    pub fn negative_count(&self) -> usize {
        self.records.len() - self.positive_count()
    }

    pub fn total_boxes(&self) -> usize {
        self.records.iter().map(|r| r.boxes.len()).sum()
    }

    /// Distinct group ids in first-appearance order.
    pub fn groups(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.group_id.clone()) {
                out.push(r.group_id.clone());
            }
        }
        out
    }
}

/// Group id an image path gets when the CSV carries no explicit group:
/// file stem, minus a trailing `_r<digits>_c<digits>` tile suffix.
pub fn derive_group_id(image_path: &str) -> String {
    let name = Path::new(image_path)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image_path.to_string());
    let stem = name.rsplit_once('.').map(|(s, _)| s.to_string()).unwrap_or(name);
    strip_tile_suffix(&stem).to_string()
}

fn strip_tile_suffix(stem: &str) -> &str {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    let Some(c_pos) = stem.rfind("_c") else { return stem };
    if !digits(&stem[c_pos + 2..]) {
        return stem;
    }
    let Some(r_pos) = stem[..c_pos].rfind("_r") else { return stem };
    if !digits(&stem[r_pos + 2..c_pos]) {
        return stem;
    }
    &stem[..r_pos]
}

/// Parse annotation CSV content. Errors carry 1-based line numbers.
pub fn parse_annotations_csv(reader: impl BufRead) -> Result<Manifest, DatasetError> {
    let mut manifest = Manifest::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line_no = line_no + 1;
        let line = line.map_err(|source| DatasetError::Io { path: "<csv>".into(), source })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 && fields.len() != 7 {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: format!("expected 6 or 7 fields, got {}", fields.len()),
            });
        }
        let image_path = fields[0].trim();
        if image_path.is_empty() {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: "empty image path".into(),
            });
        }
        let coords: Vec<&str> = fields[1..=4].iter().map(|f| f.trim()).collect();
        let class = fields[5].trim();
        let group = fields.get(6).map(|g| g.trim().to_string());

        let boxed = if coords.iter().all(|c| c.is_empty()) && class.is_empty() {
            None
        } else if coords.iter().any(|c| c.is_empty()) || class.is_empty() {
            return Err(DatasetError::MalformedLine {
                line: line_no,
                reason: "coordinates and class must be all present or all empty".into(),
            });
        } else {
            let mut vals = [0f64; 4];
            for (i, c) in coords.iter().enumerate() {
                vals[i] = c.parse().map_err(|_| DatasetError::MalformedLine {
                    line: line_no,
                    reason: format!("non-numeric coordinate {c:?}"),
                })?;
            }
            let bbox = BBox::new(vals[0], vals[1], vals[2], vals[3]).map_err(|e| {
                DatasetError::MalformedLine { line: line_no, reason: e.to_string() }
            })?;
            Some(LabeledBox { bbox, class: class.to_string() })
        };

        let group_id = match group {
            Some(g) if !g.is_empty() => g,
            _ => derive_group_id(image_path),
        };
        match index.get(image_path) {
            Some(&i) => {
                let record = &mut manifest.records[i];
                if record.group_id != group_id {
                    return Err(DatasetError::MalformedLine {
                        line: line_no,
                        reason: format!(
                            "group {group_id:?} conflicts with earlier group {:?} for {image_path}",
                            record.group_id
                        ),
                    });
                }
                record.boxes.extend(boxed);
            }
            None => {
                index.insert(image_path.to_string(), manifest.records.len());
                manifest.records.push(AnnotationRecord {
                    image_path: image_path.to_string(),
                    boxes: boxed.into_iter().collect(),
                    group_id,
                });
            }
        }
    }
    Ok(manifest)
}

pub fn read_annotations_csv(path: &Path) -> Result<Manifest, DatasetError> {
    let file = std::fs::File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_annotations_csv(std::io::BufReader::new(file))
}

/// Render a manifest as CSV; the group column appears only where it differs
/// from the derived default. Output parses back to an equal manifest.
pub fn annotations_to_csv(manifest: &Manifest) -> String {
    let mut out = String::new();
    for r in &manifest.records {
        let group_suffix = if r.group_id == derive_group_id(&r.image_path) {
            String::new()
        } else {
            format!(",{}", r.group_id)
        };
        if r.boxes.is_empty() {
            let _ = writeln!(out, "{},,,,,{}", r.image_path, group_suffix);
        } else {
            for b in &r.boxes {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}{}",
                    r.image_path, b.bbox.x1, b.bbox.y1, b.bbox.x2, b.bbox.y2, b.class, group_suffix
                );
            }
        }
    }
    out
}

/// Outcome of negative balancing; `achieved_ratio` is kept/positives, which
/// falls short of the request only when negatives ran out.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceOutcome {
    pub manifest: Manifest,
    pub requested_negatives: usize,
    pub kept_negatives: usize,
    pub achieved_ratio: f64,
}

/// Keep all positives and round(ratio·positives) negatives, sampled
/// uniformly without replacement; record order is preserved.
pub fn balance_negatives(
    manifest: &Manifest,
    ratio: f64,
    seed: u64,
) -> Result<BalanceOutcome, DatasetError> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    let n_pos = manifest.positive_count();
    if n_pos == 0 {
        return Err(DatasetError::NoPositives);
    }
    let negatives: Vec<usize> = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.is_positive())
        .map(|(i, _)| i)
        .collect();
    let requested = (ratio * n_pos as f64).round() as usize;
    let kept = requested.min(negatives.len());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<usize> = rand::seq::index::sample(&mut rng, negatives.len(), kept)
        .into_iter()
        .map(|i| negatives[i])
        .collect();
    selected.sort_unstable();

    let mut keep = vec![false; manifest.records.len()];
    for (i, r) in manifest.records.iter().enumerate() {
        keep[i] = r.is_positive();
    }
    for &i in &selected {
        keep[i] = true;
    }
    let records = manifest
        .records
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[*i])
        .map(|(_, r)| r.clone())
        .collect();
    Ok(BalanceOutcome {
        manifest: Manifest { records },
        requested_negatives: requested,
        kept_negatives: kept,
        achieved_ratio: kept as f64 / n_pos as f64,
    })
}

/// Shuffle groups by seed and deal them round-robin into k folds. Every
/// record follows its group, so no group spans folds, and fold group counts
/// differ by at most one.
pub fn grouped_kfold(
    manifest: &Manifest,
    k: usize,
    seed: u64,
) -> Result<Vec<Manifest>, DatasetError> {
    if k < 2 {
        return Err(DatasetError::InvalidK(k));
    }
    let mut groups = manifest.groups();
    if groups.len() < k {
        return Err(DatasetError::TooFewGroups { groups: groups.len(), k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    use rand::seq::SliceRandom;
    groups.shuffle(&mut rng);

    let mut fold_of: HashMap<&str, usize> = HashMap::new();
    for (i, g) in groups.iter().enumerate() {
        fold_of.insert(g, i % k);
    }
    let mut folds = vec![Manifest::default(); k];
    for r in &manifest.records {
        folds[fold_of[r.group_id.as_str()]].records.push(r.clone());
    }
    Ok(folds)
}

/// Histogram of box areas divided by a reference area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaHistogram {
    pub bin_edges: Vec<f64>,
    /// counts[i] covers [bin_edges[i], bin_edges[i+1]).
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub total: u64,
    /// Fraction of samples strictly below 1.0; None when there are no boxes.
    pub fraction_below_one: Option<f64>,
}

pub fn normalized_area_histogram(
    manifest: &Manifest,
    reference_area: f64,
    bin_edges: &[f64],
) -> Result<AreaHistogram, DatasetError> {
    if !(reference_area.is_finite() && reference_area > 0.0) {
        return Err(DatasetError::InvalidReference(reference_area));
    }
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DatasetError::InvalidBins);
    }
    let mut counts = vec![0u64; bin_edges.len() - 1];
    let (mut underflow, mut overflow, mut total, mut below_one) = (0u64, 0u64, 0u64, 0u64);
    for r in &manifest.records {
        for b in &r.boxes {
            let v = b.bbox.area() / reference_area;
            total += 1;
            if v < 1.0 {
                below_one += 1;
            }
            if v < bin_edges[0] {
                underflow += 1;
            } else if v >= *bin_edges.last().unwrap() {
                overflow += 1;
            } else {
                // last bin whose lower edge is ≤ v
                let i = bin_edges.partition_point(|&e| e <= v) - 1;
                counts[i] += 1;
            }
        }
    }
    Ok(AreaHistogram {
        bin_edges: bin_edges.to_vec(),
        counts,
        underflow,
        overflow,
        total,
        fraction_below_one: (total > 0).then(|| below_one as f64 / total as f64),
    })
}
