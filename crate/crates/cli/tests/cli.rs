//! Black-box tests of the tileforge binary: the documented command lines,
//! exit codes, JSON summaries, and byte-level idempotency.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

fn tileforge(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tileforge"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().expect("no signal"),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let (code, stdout, stderr) = tileforge(dir, args);
    assert_eq!(code, 0, "args {args:?} failed: {stderr}");
    stdout
}

/// All regular files under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("readable dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).expect("under root");
                out.insert(
                    rel.to_str().expect("utf-8 path").to_string(),
                    std::fs::read(&path).expect("readable file"),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

#[test]
fn tile_command_writes_the_documented_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", "scans", "--count", "1", "--size", "1500x1900"]);
    let stdout = ok(
        dir.path(),
        &[
            "tile", "--image", "scans/scan_000.png", "--out-dir", "t", "--grid", "5x5",
            "--tile", "500x600", "--scale", "2", "--json",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["tiles"], 25);

    let pngs: Vec<String> = std::fs::read_dir(dir.path().join("t"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".png"))
        .collect();
    assert_eq!(pngs.len(), 25, "5x5 grid must write 25 tiles");
    assert!(pngs.iter().any(|n| n == "scan_000_r4_c4.png"));

    let plan: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("t/scan_000_plan.json")).unwrap())
            .unwrap();
    assert_eq!(plan["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(plan["source_file"], "scan_000.png");
    assert_eq!(plan["plan"]["tiles"].as_array().unwrap().len(), 25);
}

#[test]
fn evaluate_perfect_detections_reports_accuracy_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("ann.csv"),
        "img_a.png,10,20,30,50,defect\nimg_b.png,,,,,\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("det.csv"), "img_a.png,10,20,30,50,defect,0.9\n").unwrap();
    let stdout = ok(
        dir.path(),
        &[
            "evaluate", "--annotations", "ann.csv", "--detections", "det.csv",
            "--out", "report.json", "--json",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["accuracy"], 1.0);
    assert_eq!(summary["map"], 1.0);

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["accuracy"], 1.0);
    assert_eq!(report["map"], 1.0);
    assert_eq!(report["seed"], 0);
    assert_eq!(report["per_image"].as_array().unwrap().len(), 2);
    assert_eq!(report["per_image"][1]["cond_union_iou"], serde_json::Value::Null);
}

#[test]
fn unknown_flag_exits_two_with_usage_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, stderr) = tileforge(dir.path(), &["--bogus-flag"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("Usage"), "stderr was: {stderr}");

    let (code, _, stderr) = tileforge(dir.path(), &["frobnicate"]);
    assert_eq!(code, 2, "unknown subcommand is a usage error: {stderr}");
}

#[test]
fn missing_input_exits_one_and_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("det.csv"), "").unwrap();
    let (code, _, stderr) = tileforge(
        dir.path(),
        &["evaluate", "--annotations", "nope.csv", "--detections", "det.csv", "--out", "r.json"],
    );
    assert_eq!(code, 1);
    assert!(stderr.contains("nope.csv"), "diagnostic must name the input: {stderr}");
    assert_eq!(stderr.lines().count(), 1, "diagnostic is one line: {stderr}");
}

#[test]
fn malformed_csv_exits_one_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "img.png,1,2,3\n").unwrap();
    std::fs::write(dir.path().join("det.csv"), "").unwrap();
    let (code, _, stderr) = tileforge(
        dir.path(),
        &["evaluate", "--annotations", "bad.csv", "--detections", "det.csv", "--out", "r.json"],
    );
    assert_eq!(code, 1);
    assert!(stderr.contains("bad.csv") && stderr.contains("line 1"), "stderr: {stderr}");
}

#[test]
fn json_summaries_carry_version_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        dir.path(),
        &["synth", "--out-dir", "s", "--count", "2", "--size", "400x500", "--seed", "9", "--json"],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["count"], 2);

    let synth_json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s/synth.json")).unwrap())
            .unwrap();
    assert_eq!(synth_json["seed"], 9);
    assert_eq!(synth_json["tool_version"], env!("CARGO_PKG_VERSION"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", "a", "--count", "3", "--size", "400x500", "--seed", "5"]);
    ok(dir.path(), &["synth", "--out-dir", "b", "--count", "3", "--size", "400x500", "--seed", "5"]);
    assert_eq!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));

    // a different seed must actually change the pixels
    ok(dir.path(), &["synth", "--out-dir", "c", "--count", "3", "--size", "400x500", "--seed", "6"]);
    assert_ne!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("c")));
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", "a", "--count", "3", "--size", "400x500"]);
    let out = Command::new(env!("CARGO_BIN_EXE_tileforge"))
        .current_dir(dir.path())
        .env("TILEFORGE_THREADS", "1")
        .args(["synth", "--out-dir", "b", "--count", "3", "--size", "400x500"])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(snapshot(&dir.path().join("a")), snapshot(&dir.path().join("b")));
}

#[test]
fn pipeline_stages_compose_through_files_alone() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--out-dir", "scans", "--count", "4", "--size", "600x750", "--seed", "7"]);
    ok(
        dir.path(),
        &[
            "crop", "--images-dir", "scans", "--out-dir", "cropped",
            "--annotations", "scans/annotations.csv", "--seed", "7",
        ],
    );
    ok(
        dir.path(),
        &[
            "tile", "--images-dir", "cropped", "--out-dir", "tiles", "--tile", "250x300",
            "--overlap", "125x150", "--scale", "2", "--annotations", "cropped/annotations.csv",
            "--min-visibility", "1.0", "--seed", "7",
        ],
    );
    ok(dir.path(), &["split", "--annotations", "tiles/annotations.csv", "--out-dir", "folds", "--k", "3", "--seed", "7"]);
    ok(dir.path(), &["balance", "--annotations", "tiles/annotations.csv", "--out", "balanced.csv", "--seed", "7"]);
    ok(dir.path(), &["stats", "--annotations", "tiles/annotations.csv", "--out", "stats.json", "--seed", "7"]);

    // a perfect detector in tile space: every projected annotation, score 0.9
    let tile_ann = std::fs::read_to_string(dir.path().join("tiles/annotations.csv")).unwrap();
    let dets: String = tile_ann
        .lines()
        .filter(|l| !l.split(',').nth(1).unwrap_or("").is_empty())
        .map(|l| {
            let mut fields: Vec<&str> = l.split(',').collect();
            fields.truncate(6);
            format!("{},0.9\n", fields.join(","))
        })
        .collect();
    std::fs::write(dir.path().join("tile_dets.csv"), dets).unwrap();

    ok(
        dir.path(),
        &[
            "merge", "--detections", "tile_dets.csv", "--plans", "tiles",
            "--out", "merged.csv", "--seed", "7",
        ],
    );
    let stdout = ok(
        dir.path(),
        &[
            "evaluate", "--annotations", "cropped/annotations.csv", "--detections", "merged.csv",
            "--out", "report.json", "--seed", "7", "--json",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(summary["map"], 1.0);
    assert_eq!(summary["accuracy"], 1.0);
    assert_eq!(summary["false_positives"], 0);
    assert_eq!(summary["false_negatives"], 0);
}

#[test]
fn optimize_anchors_beats_the_stock_config_on_small_boxes() {
    let dir = tempfile::tempdir().unwrap();
    // 200 small boxes around 14x18 at varied offsets
    let mut csv = String::new();
    for i in 0..200 {
        let w = 11 + (i % 7);
        let h = 14 + (i % 9);
        let x = 10 + 3 * i;
        csv.push_str(&format!("img_{i}.png,{x},50,{},{},defect\n", x + w, 50 + h));
    }
    std::fs::write(dir.path().join("ann.csv"), csv).unwrap();
    let stdout = ok(
        dir.path(),
        &[
            "optimize-anchors", "--annotations", "ann.csv", "--out", "anchors.json",
            "--generations", "60", "--seed", "3", "--json",
        ],
    );
    let summary: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    let fitness = summary["fitness"].as_f64().unwrap();
    let default_fitness = summary["default_fitness"].as_f64().unwrap();
    assert!(fitness > 0.75, "fitness {fitness}");
    assert!(default_fitness < 0.3, "stock anchors should fit poorly: {default_fitness}");

    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("anchors.json")).unwrap())
            .unwrap();
    assert_eq!(saved["fitness"].as_f64().unwrap(), fitness);
    assert_eq!(saved["boxes"], 200);
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = tileforge(dir.path(), &["--help"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("crop") && stdout.contains("evaluate"));
}
