use std::path::Path;
use std::process::{Command, Output};

use pavescan::raster::Raster;

fn pavescan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pavescan"))
        .args(args)
        .env("PAVESCAN_NUM_WORKERS", "1")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, count: &str) {
    let out = pavescan(&[
        "--seed",
        "5",
        "dataset",
        "synth",
        "--out",
        s(dir),
        "--count",
        count,
        "--width",
        "64",
        "--height",
        "48",
        "--val-fraction",
        "0.25",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn help_lists_subcommands() {
    let out = pavescan(&["--help"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["dataset", "preprocess", "train", "eval", "infer", "report"] {
        assert!(text.contains(cmd), "missing {cmd} in help");
    }
}

#[test]
fn synth_then_stats_json() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "12");
    assert!(dir.path().join("manifest.jsonl").is_file());
    let out = pavescan(&["dataset", "stats", "--root", s(dir.path()), "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let t = &v["totals"];
    assert_eq!(t["unassigned_images"].as_u64(), Some(0));
    let rows = v["per_class"].as_array().unwrap();
    for key in ["train_images", "val_images", "train_annotations"] {
        let sum: u64 = rows.iter().map(|r| r[key].as_u64().unwrap()).sum();
        assert_eq!(t[key].as_u64(), Some(sum), "{key}");
    }
    assert!(t["train_images"].as_u64().unwrap() + t["val_images"].as_u64().unwrap() >= 12);
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let out = pavescan(&[
        "--set",
        "detect.no_such_key=1",
        "--dump-config",
        "dataset",
        "stats",
        "--root",
        ".",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn dump_config_reflects_overrides() {
    let out = pavescan(&[
        "--seed",
        "42",
        "--set",
        "detect.batch=16",
        "--set",
        "detect.subdivisions=4",
        "--dump-config",
        "dataset",
        "stats",
        "--root",
        ".",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().any(|l| l.trim() == "seed = 42"), "{text}");
    assert!(
        text.lines().any(|l| l.trim() == "detect.batch = 16"),
        "{text}"
    );
}

#[test]
fn missing_checkpoint_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = pavescan(&[
        "infer",
        "--checkpoint",
        s(&dir.path().join("nope")),
        "--input",
        s(dir.path()),
        "--out",
        s(&dir.path().join("o")),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(!out.stderr.is_empty());
}

#[test]
fn preprocess_writes_one_gray_png_per_image() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "4");
    let out_dir = dir.path().join("clahe");
    let out = pavescan(&[
        "preprocess",
        "--input",
        s(&dir.path().join("images")),
        "--out",
        s(&out_dir),
        "--clip-limit",
        "3",
        "--tiles",
        "2x2",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let files: Vec<_> = std::fs::read_dir(&out_dir).unwrap().collect();
    assert_eq!(files.len(), 4);
    let img = Raster::load(&files[0].as_ref().unwrap().path()).unwrap();
    assert_eq!((img.width, img.height, img.channels), (64, 48, 1));
}

#[test]
fn eval_segment_on_identical_masks_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "3");
    let masks = dir.path().join("masks");
    let report = dir.path().join("report");
    let out = pavescan(&[
        "eval",
        "segment",
        "--pred",
        s(&masks),
        "--gt",
        s(&masks),
        "--out",
        s(&report),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(report.join("segmentation_report.json")).unwrap(),
    )
    .unwrap();
    let col = &v["columns"][0][1];
    assert_eq!(col["miou"].as_f64(), Some(1.0));
    assert_eq!(col["pixel_accuracy"].as_f64(), Some(1.0));
}
