//! The command-line front end: outputs, manifests and JSON errors.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn cpcox(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpcox")).args(args).output().unwrap()
}

fn error_of(out: &Output) -> Value {
    assert!(!out.status.success());
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is JSON");
    v["error"].clone()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_dataset_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpcox(&["--seed", "3", "--out", s(dir.path()), "simulate", "--n", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["outputs"]["dataset.csv"].is_string());
    let text = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    assert_eq!(text.lines().count(), 52);
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "2")] {
        let out = cpcox(&["--threads", threads, "--out", s(dir.path()), "limit-law", "--draws", "500"]);
        assert!(out.status.success());
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("limit_draws.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}

#[test]
fn missing_input_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = cpcox(&["--out", s(dir.path()), "fit", "--input", "/nonexistent/data.csv"]);
    let err = error_of(&out);
    assert_eq!(err["kind"], "io");
    assert!(err["message"].as_str().unwrap().contains("/nonexistent/data.csv"));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = cpcox(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_of(&out)["kind"], "usage");
}

#[test]
fn malformed_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "alpha0 = [0.0\n").unwrap();
    let out = cpcox(&["--out", s(dir.path()), "simulate", "--config", s(&cfg)]);
    assert_eq!(error_of(&out)["kind"], "toml");
}

#[test]
fn invalid_window_is_invalid_input() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(cpcox(&["--out", s(&sim), "simulate", "--n", "40"]).status.success());
    let data = sim.join("dataset.csv");
    let out = cpcox(&["--out", s(dir.path()), "fit", "--input", s(&data), "--window", "2", "1"]);
    assert_eq!(error_of(&out)["kind"], "invalid_input");
}

#[test]
fn replay_refuses_an_edited_input() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let fit = dir.path().join("fit");
    assert!(cpcox(&["--out", s(&sim), "simulate", "--n", "60"]).status.success());
    let data = sim.join("dataset.csv");
    assert!(cpcox(&["--out", s(&fit), "fit", "--input", s(&data)]).status.success());

    let again = dir.path().join("again");
    let manifest = fit.join("manifest.json");
    let ok = cpcox(&["--out", s(&again), "replay", "--manifest", s(&manifest)]);
    assert!(ok.status.success());
    let report: Value = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report["files"].as_array().unwrap().len(), 3);

    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str(&text.lines().nth(1).unwrap().to_string());
    text.push('\n');
    std::fs::write(&data, text).unwrap();
    let out = cpcox(&["--out", s(&again), "replay", "--manifest", s(&manifest)]);
    assert_eq!(error_of(&out)["kind"], "invalid_input");
}

#[test]
fn bootstrap_reports_an_interval() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    assert!(cpcox(&["--seed", "5", "--out", s(&sim), "simulate", "--n", "200"]).status.success());
    let data = sim.join("dataset.csv");
    let boot = dir.path().join("boot");
    let out = cpcox(&[
        "--seed", "5", "--out", s(&boot), "bootstrap", "--input", s(&data), "--method", "m-out-of-n",
        "--replicates", "40", "--window", "0.5", "1.5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&std::fs::read(boot.join("interval.json")).unwrap()).unwrap();
    let (lo, hi) = (v["interval"]["lower"].as_f64().unwrap(), v["interval"]["upper"].as_f64().unwrap());
    assert!(lo <= hi);
    assert_eq!(v["m"].as_u64().unwrap(), (200f64.powf(0.8)).ceil() as u64);
}
