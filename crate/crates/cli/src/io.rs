//! File plumbing shared by the subcommands: atomic writes, the JSON header
//! every output carries, and deterministic directory listings.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::{json, Value};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Write bytes to a sibling temp file and rename it into place, so readers
/// never observe a half-written output.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating temp file in {}", dir.display()))?;
    tmp.write_all(bytes)
        .with_context(|| format!("writing {}", path.display()))?;
    tmp.persist(path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Wrap a JSON object with the provenance header ({"tool_version", "seed"})
/// present in every file this tool writes.
pub fn envelope(seed: u64, value: Value) -> Value {
    let mut map = serde_json::Map::new();
    map.insert("tool_version".into(), json!(TOOL_VERSION));
    map.insert("seed".into(), json!(seed));
    match value {
        Value::Object(rest) => map.extend(rest),
        other => {
            map.insert("result".into(), other);
        }
    }
    Value::Object(map)
}

pub fn write_json(path: &Path, seed: u64, value: Value) -> Result<()> {
    let text = serde_json::to_string_pretty(&envelope(seed, value))? + "\n";
    atomic_write(path, text.as_bytes())
}

/// PNG counterpart of atomic_write; the encoder needs a path, so this goes
/// through a dot-prefixed sibling temp file.
pub fn save_png_atomic(img: &tileforge_core::gray::GrayImage, path: &Path) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = dir.join(format!(".{}.tmp", file_name(path)?));
    img.save_png(&tmp)
        .with_context(|| format!("writing {}", path.display()))?;
    std::fs::rename(&tmp, path)
        .with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Files in `dir` whose name ends with `suffix` (case-sensitive), sorted by
/// name so batch runs process inputs in a stable order.
pub fn files_with_suffix(dir: &Path, suffix: &str) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        if path.is_file()
            && path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(suffix))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn file_name(path: &Path) -> Result<&str> {
    path.file_name()
        .and_then(|n| n.to_str())
        .with_context(|| format!("{} has no usable file name", path.display()))
}

pub fn file_stem(path: &Path) -> Result<&str> {
    path.file_stem()
        .and_then(|n| n.to_str())
        .with_context(|| format!("{} has no usable file stem", path.display()))
}

/// Parse "WIDTHxHEIGHT", e.g. "500x600".
pub fn parse_dims(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once('x').ok_or_else(|| format!("{s:?} is not WIDTHxHEIGHT"))?;
    let w = w.parse().map_err(|_| format!("bad width in {s:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height in {s:?}"))?;
    Ok((w, h))
}

/// Parse "LO:HI", e.g. "1:4".
pub fn parse_bounds(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("{s:?} is not LO:HI"))?;
    let lo = lo.parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
    let hi = hi.parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
    Ok((lo, hi))
}

