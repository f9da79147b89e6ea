use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn taskgeo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_taskgeo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn json(dir: &Path, args: &[&str]) -> (i32, Value) {
    let mut full = vec!["--json"];
    full.extend_from_slice(args);
    let out = taskgeo(dir, &full);
    let value = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("{args:?}: {e}\n{}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), value)
}

fn ok(dir: &Path, args: &[&str]) -> Value {
    let (code, v) = json(dir, args);
    assert_eq!(code, 0, "{args:?}: {v}");
    v
}

const STAGES: &[&[&str]] = &[
    &["synth", "gen", "--classes", "3", "--samples", "150", "--dim", "5", "-o", "task"],
    &["synth", "train", "--task", "task", "--steps", "60", "--every", "5", "-o", "run"],
    &["reindex", "run/trajectory.json", "--grid", "12", "-o", "curve"],
    &["inpca", "--curve", "curve", "-k", "2", "-o", "emb"],
];

#[test]
fn pipeline_matches_running_stages_by_hand() {
    let by_hand = tempfile::tempdir().unwrap();
    for stage in STAGES {
        ok(by_hand.path(), stage);
    }

    let piped = tempfile::tempdir().unwrap();
    let names = ["gen", "train", "reindex", "inpca"];
    let outputs = ["task", "run", "curve", "emb.csv"];
    let stages: Vec<Value> = STAGES
        .iter()
        .enumerate()
        .map(|(i, args)| {
            let mut command = vec!["taskgeo", "--deterministic"];
            command.extend_from_slice(args);
            serde_json::json!({
                "name": names[i],
                "command": command,
                "inputs": if i == 0 { vec![] } else { vec![outputs[i - 1]] },
                "outputs": [outputs[i]],
            })
        })
        .collect();
    fs::write(
        piped.path().join("pipeline.json"),
        serde_json::to_string_pretty(&serde_json::json!({ "stages": stages })).unwrap(),
    )
    .unwrap();

    let report = ok(piped.path(), &["pipeline", "pipeline.json"]);
    assert!(report["stages"].as_array().unwrap().iter().all(|s| s["status"] == "completed"), "{report}");
    for file in ["emb.csv", "emb.json", "curve/curve.json", "run/ckpt_0012.pmat"] {
        assert_eq!(
            fs::read(by_hand.path().join(file)).unwrap(),
            fs::read(piped.path().join(file)).unwrap(),
            "{file}"
        );
    }

    let again = ok(piped.path(), &["pipeline", "pipeline.json", "--resume"]);
    assert!(again["stages"].as_array().unwrap().iter().all(|s| s["status"] == "skipped"), "{again}");
}

#[test]
fn empty_and_cyclic_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.json"), r#"{"stages": []}"#).unwrap();
    let report = ok(dir.path(), &["pipeline", "empty.json"]);
    assert_eq!(report["stages"].as_array().unwrap().len(), 0);
    assert!(!dir.path().join(".pipeline-cache.json").exists());

    fs::write(
        dir.path().join("cycle.json"),
        r#"{"stages": [
            {"name": "a", "command": ["true"], "after": ["b"]},
            {"name": "b", "command": ["true"], "after": ["a"]}
        ]}"#,
    )
    .unwrap();
    let (code, v) = json(dir.path(), &["pipeline", "cycle.json"]);
    assert_eq!(code, 2);
    assert_eq!(v["ok"], false);
}

#[test]
fn failing_stage_blocks_only_its_dependents() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.json"),
        r#"{"stages": [
            {"name": "bad", "command": ["taskgeo", "validate", "missing.pmat"]},
            {"name": "after_bad", "command": ["taskgeo", "--help"], "after": ["bad"]},
            {"name": "independent", "command": ["taskgeo", "--version"]}
        ]}"#,
    )
    .unwrap();
    let (code, v) = json(dir.path(), &["pipeline", "p.json"]);
    assert_eq!(code, 2, "{v}");
    let status: Vec<&str> = v["stages"].as_array().unwrap().iter().map(|s| s["status"].as_str().unwrap()).collect();
    assert_eq!(status, ["failed", "blocked", "completed"]);
}

#[test]
fn errors_carry_kind_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "gen", "--classes", "3", "--samples", "30", "--dim", "3", "-o", "a"]);
    ok(dir.path(), &["synth", "train", "--task", "a", "--steps", "10", "--every", "10", "-o", "ra"]);
    ok(dir.path(), &["synth", "gen", "--classes", "2", "--samples", "30", "--dim", "3", "-o", "b"]);
    ok(dir.path(), &["synth", "train", "--task", "b", "--steps", "10", "--every", "10", "-o", "rb"]);

    let (code, v) = json(dir.path(), &["dist", "ra/ckpt_0000.pmat", "rb/ckpt_0000.pmat"]);
    assert_eq!((code, v["kind"].as_str()), (2, Some("validation")), "{v}");
    let (code, v) = json(dir.path(), &["dist", "ra/ckpt_0000.pmat", "nope.pmat"]);
    assert_eq!((code, v["kind"].as_str()), (4, Some("io")), "{v}");

    fs::write(dir.path().join("junk.pmat"), b"PMAT1 2 2 f64\n\0\0").unwrap();
    let (code, v) = json(dir.path(), &["validate", "junk.pmat", "ra/ckpt_0001.pmat"]);
    assert_eq!(code, 2);
    assert_eq!(v["files"][0]["ok"], false);
    assert_eq!(v["files"][1]["ok"], true);

    let out = taskgeo(dir.path(), &["dist", "ra/ckpt_0000.pmat", "nope.pmat"]);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn geodesic_midpoint_is_equidistant() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "gen", "--classes", "4", "--samples", "40", "--dim", "3", "-o", "t"]);
    ok(dir.path(), &["synth", "train", "--task", "t", "--steps", "20", "--every", "20", "-o", "r"]);
    ok(dir.path(), &["geodesic", "r/ckpt_0000.pmat", "r/ckpt_0001.pmat", "--lambda", "0.5", "-o", "mid.pmat"]);
    let d = |a: &str, b: &str| ok(dir.path(), &["dist", a, b, "--metric", "great-circle"])["value"].as_f64().unwrap();
    let (left, right) = (d("r/ckpt_0000.pmat", "mid.pmat"), d("mid.pmat", "r/ckpt_0001.pmat"));
    assert!((left - right).abs() < 1e-10, "{left} {right}");

    let v = ok(dir.path(), &["progress", "mid.pmat", "--labels", "r/labels.lbl"]);
    let t = v["progress"].as_f64().unwrap();
    assert!(t > 0.0 && t < 1.0);
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "gen", "--classes", "3", "--samples", "90", "--dim", "4", "-o", "t"]);
    ok(dir.path(), &["synth", "train", "--task", "t", "--steps", "30", "--every", "3", "-o", "r"]);
    ok(dir.path(), &["reindex", "r/trajectory.json", "--grid", "8", "-o", "c"]);
    ok(dir.path(), &["--threads", "1", "inpca", "--curve", "c", "-k", "3", "-o", "one", "--save-dmat", "one.dmat"]);
    ok(dir.path(), &["--threads", "3", "inpca", "--curve", "c", "-k", "3", "-o", "three", "--save-dmat", "three.dmat"]);
    for (a, b) in [("one.csv", "three.csv"), ("one.json", "three.json"), ("one.dmat", "three.dmat")] {
        assert_eq!(fs::read(dir.path().join(a)).unwrap(), fs::read(dir.path().join(b)).unwrap());
    }
    let v = ok(dir.path(), &["stress", "--dmat", "one.dmat"]);
    assert_eq!(v["stress"].as_array().unwrap().last().unwrap().as_f64(), Some(1.0));
}
