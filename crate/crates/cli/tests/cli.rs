use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use tempsal::gaze::{write_tsal, Normalization, SaliencyMap};

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempsal"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn front_half(dir: &Path, images: &str) {
    ok(dir, &["synth", "--out", "ds", "--images", images, "--seed", "2"]);
    ok(dir, &["timestamps", "--gaze", "ds/gaze.jsonl", "--fixations", "ds/fixations.csv", "--out", "timed.csv"]);
    ok(dir, &["slice", "--fixations", "timed.csv", "--out", "sliced.csv"]);
    ok(dir, &["rasterize", "--fixations", "sliced.csv", "--out", "maps"]);
}

#[test]
fn pipeline_on_twenty_images_is_fast() {
    let dir = tempfile::tempdir().unwrap();
    let start = Instant::now();
    front_half(dir.path(), "20");
    ok(dir.path(), &["analyze", "--maps", "maps", "--out", "analysis", "--fixations", "timed.csv"]);
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 60.0, "{secs} s");
    for f in ["matrix.csv", "scores.csv", "ttest.csv", "histogram.csv", "average/a1.tsal", "average/a5.pgm", "difference/d4.ppm"] {
        assert!(dir.path().join("analysis").join(f).is_file(), "{f}");
    }
    let matrix = std::fs::read_to_string(dir.path().join("analysis/matrix.csv")).unwrap();
    assert!(matrix.starts_with("slice,t1,t2,t3,t4,t5\n"));
}

#[test]
fn slicing_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "ds", "--images", "3"]);
    ok(d, &["timestamps", "--gaze", "ds/gaze.jsonl", "--fixations", "ds/fixations.csv", "--out", "timed.csv"]);
    for scheme in ["equal-duration", "equal-distribution"] {
        ok(d, &["slice", "--fixations", "timed.csv", "--out", "a.csv", "--scheme", scheme, "--n", "4"]);
        ok(d, &["slice", "--fixations", "a.csv", "--out", "b.csv", "--scheme", scheme, "--n", "4"]);
        assert_eq!(std::fs::read(d.join("a.csv")).unwrap(), std::fs::read(d.join("b.csv")).unwrap());
    }
}

#[test]
fn evaluating_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    front_half(d, "4");
    ok(d, &["eval", "--pred", "maps/gt", "--gt", "maps/gt", "--fixations", "timed.csv", "--out", "self.csv"]);
    let mut rdr = csv::Reader::from_path(d.join("self.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["image_id", "auc_judd", "sauc", "nss", "cc", "kl", "sim", "ig"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[4][0], "mean");
    for r in &rows {
        let cc: f64 = r[4].parse().unwrap();
        let kl: f64 = r[5].parse().unwrap();
        assert!((cc - 1.0).abs() < 1e-12, "{r:?}");
        assert!(kl < 1e-6, "{r:?}");
    }
}

#[test]
fn parallel_jobs_do_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["synth", "--out", "one", "--images", "6", "--jobs", "1"]);
    ok(d, &["synth", "--out", "four", "--images", "6", "--jobs", "4"]);
    for f in ["gaze.jsonl", "fixations.csv", "images/img0005.ppm"] {
        assert_eq!(std::fs::read(d.join("one").join(f)).unwrap(), std::fs::read(d.join("four").join(f)).unwrap());
    }
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("run.conf"), "images = 2\nseed = 8\n").unwrap();
    ok(d, &["synth", "--out", "a", "--config", "run.conf"]);
    ok(d, &["synth", "--out", "b", "--config", "run.conf", "--images", "3"]);
    let count = |p: &str| std::fs::read_dir(d.join(p).join("images")).unwrap().count();
    assert_eq!((count("a"), count("b")), (2, 3));
    let spec: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("a/dataset.json")).unwrap()).unwrap();
    assert_eq!(spec["seed"], 8);
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

#[test]
fn errors_are_one_line_with_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let out = run(d, &["slice", "--fixations", "missing.csv", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error: input: "));
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);

    let out = run(d, &["slice", "--fixations", "x.csv", "--out", "y.csv", "--scheme", "weekly"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr(&out).trim_end().lines().count(), 1);

    std::fs::write(d.join("bad.conf"), "images = lots\n").unwrap();
    let out = run(d, &["synth", "--out", "ds", "--config", "bad.conf"]);
    assert_eq!(out.status.code(), Some(2));

    for k in 1..=2 {
        for id in ["a", "b"] {
            let flat = SaliencyMap::new(4, 4, vec![0.5; 16], Normalization::Raw).unwrap();
            write_tsal(d.join(format!("flat/t{k}/{id}.tsal")), &flat).unwrap();
        }
    }
    let out = run(d, &["analyze", "--maps", "flat", "--out", "an"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).starts_with("error: numeric: "));
}
