use std::path::Path;
use std::process::{Command, Output};

use mvmotion::config::Config;
use mvmotion::data::{read_jsonl, LocalRecord, MotionRecord, MultiViewRecord};

const TINY: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny.toml");

fn mvmotion(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mvmotion")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = mvmotion(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = mvmotion(&["levitate"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unrecognized subcommand"));
    assert!(!mvmotion(&[], dir.path()).status.success());
}

#[test]
fn synth_writes_exactly_count_records() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--count", "10", "--out", "m.jsonl", "--seed", "3"], dir.path());
    let recs: Vec<MotionRecord> = read_jsonl(dir.path().join("m.jsonl")).unwrap();
    assert_eq!(recs.len(), 10);
    assert!(recs.iter().all(|r| r.dims == 3 && r.joint_names.len() == 8 && r.frame_count() == 40));
    let labels: Vec<&str> = recs.iter().take(3).map(|r| r.label.as_deref().unwrap()).collect();
    assert_eq!(labels, vec!["walk", "turn", "wave"]);
}

#[test]
fn bad_inputs_fail_with_messages() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("broken.jsonl"), "{\"fps\": 20}\n").unwrap();
    let out = mvmotion(&["lift", "--input", "broken.jsonl", "--out", "x.jsonl"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.jsonl:1"));
    std::fs::write(dir.path().join("bad.toml"), "[stage1]\nlearning_rate = 1.0\n").unwrap();
    let out = mvmotion(&["--config", "bad.toml", "synth", "--count", "1", "--out", "m.jsonl"], dir.path());
    assert!(!out.status.success());
    let out = mvmotion(&["synth", "--count", "1", "--kinds", "moonwalk", "--out", "m.jsonl"], dir.path());
    assert!(!out.status.success());
}

#[test]
fn ingest_and_single_view_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth", "--count", "6", "--out", "m.jsonl"], p);
    // Turn the 3D clips into 2D pose records by dropping depth.
    let recs: Vec<MotionRecord> = read_jsonl(p.join("m.jsonl")).unwrap();
    let flat: Vec<MotionRecord> = recs
        .into_iter()
        .map(|mut r| {
            r.frames = r.frames.chunks_exact(3).flat_map(|c| [c[0], c[1]]).collect();
            r.dims = 2;
            r
        })
        .collect();
    mvmotion::data::write_jsonl(p.join("poses.jsonl"), &flat).unwrap();
    let summary = ok(&["ingest", "--input", "poses.jsonl", "--out", "local.jsonl"], p);
    assert!(summary.contains("\"kept\":6"), "{summary}");
    let local: Vec<LocalRecord> = read_jsonl(p.join("local.jsonl")).unwrap();
    assert_eq!(local.len(), 6);

    ok(&["--config", TINY, "synth", "--count", "12", "--out", "train.jsonl"], p);
    ok(&["--config", TINY, "train2d", "--data", "train.jsonl", "--out", "s1.ckpt"], p);
    assert!(p.join("s1.ckpt.loss.csv").exists());
    ok(&["--config", TINY, "sample", "--model", "s1.ckpt", "--prompt", "a person waves", "--count", "2", "--out", "s1.jsonl"], p);
    let s: Vec<LocalRecord> = read_jsonl(p.join("s1.jsonl")).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[0].joints, 7);
}

#[test]
fn full_pipeline_with_consistency_block() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut cfg = Config::load(TINY).unwrap();
    cfg.sampling.consistency = true;
    std::fs::write(p.join("cons.toml"), cfg.to_toml()).unwrap();
    ok(&["--config", "cons.toml", "synth", "--count", "12", "--out", "train.jsonl"], p);
    ok(&["--config", "cons.toml", "train2d", "--data", "train.jsonl", "--out", "s1.ckpt"], p);
    ok(&["--config", "cons.toml", "trainmv", "--base", "s1.ckpt", "--data", "train.jsonl", "--out", "s2.ckpt"], p);
    let summary = ok(&["--config", "cons.toml", "sample", "--model", "s2.ckpt", "--out", "mv.jsonl"], p);
    let v: serde_json::Value = serde_json::from_str(summary.trim()).unwrap();
    assert_eq!(v["samples"], 12);
    assert!(v["max_step_inconsistency"].as_f64().unwrap() <= 1e-9, "{summary}");
    let mv: Vec<MultiViewRecord> = read_jsonl(p.join("mv.jsonl")).unwrap();
    assert_eq!((mv[0].views, mv[0].frames), (4, 10));
    let lift = ok(&["--config", "cons.toml", "lift", "--input", "mv.jsonl", "--out", "lifted.jsonl"], p);
    let v: serde_json::Value = serde_json::from_str(lift.trim()).unwrap();
    assert!(v["mean_reprojection_rmse"].as_f64().unwrap() <= 1e-9, "{lift}");
    ok(&["plot", "--input", "lifted.jsonl", "--index", "3", "--out", "fig.svg"], p);
    assert!(std::fs::read_to_string(p.join("fig.svg")).unwrap().starts_with("<svg"));
    assert!(!mvmotion(&["plot", "--input", "lifted.jsonl", "--index", "99", "--out", "x.svg"], p).status.success());
    // A multi-view checkpoint is not a valid stage-2 base.
    assert!(!mvmotion(&["--config", "cons.toml", "trainmv", "--base", "s2.ckpt", "--data", "train.jsonl", "--out", "x.ckpt"], p).status.success());
}
