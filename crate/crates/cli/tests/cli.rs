//! End-to-end tests of the `mstransport` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mstransport"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SINGLE_RUN: &str = r#"{
    "kind": "single_run",
    "media": {"name": "sine10"},
    "dimension": 1,
    "coarse_cells": 16,
    "refinement": 16,
    "basis_order": 4,
    "epsilons": [0.01],
    "dt": 0.005,
    "final_time": 0.05
}"#;

#[test]
fn solve_writes_report_and_snapshots() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", SINGLE_RUN);
    let out = dir.path().join("out");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("report.json").exists());
    assert!(out.join("density.csv").exists());
    assert!(out.join("density_fine.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["coarse_cells"], 16);
    assert!(report["runs"][0]["errors"]["mass_drift_rel"].as_f64().unwrap() < 1e-8);
}

#[test]
fn missing_config_is_exit_code_2() {
    let status = bin()
        .args(["solve", "--config", "/nonexistent/config.json"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn invalid_config_is_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bad.json",
        &SINGLE_RUN.replace("\"basis_order\": 4", "\"basis_order\": 4, \"mystery\": true"),
    );
    let output = bin().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error"));
}

#[test]
fn kind_mismatch_is_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", SINGLE_RUN);
    let output = bin().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn warm_cache_reproduces_snapshots_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", SINGLE_RUN);
    let cache = dir.path().join("cache");
    let (out1, out2) = (dir.path().join("o1"), dir.path().join("o2"));
    for out in [&out1, &out2] {
        let status = bin()
            .args(["solve", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out)
            .arg("--cache")
            .arg(&cache)
            .status()
            .unwrap();
        assert!(status.success());
    }
    assert_eq!(
        fs::read(out1.join("density.csv")).unwrap(),
        fs::read(out2.join("density.csv")).unwrap()
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out2.join("report.json")).unwrap()).unwrap();
    assert!(report["cache_hits"].as_u64().unwrap() > 0);
}

#[test]
fn assemble_populates_cache_for_later_solves() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", SINGLE_RUN);
    let cache = dir.path().join("cache");
    let status = bin()
        .args(["assemble", "--config"])
        .arg(&cfg)
        .arg("--cache")
        .arg(&cache)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(fs::read_dir(&cache).unwrap().count() > 0);

    let out = dir.path().join("out");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("--cache")
        .arg(&cache)
        .args(["--threads", "2"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert!(report["cache_hits"].as_u64().unwrap() > 0);
}

#[test]
fn sweep_reports_a_rate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{
        "kind": "delta_sweep",
        "media": {"name": "cos_delta"},
        "dimension": 1,
        "coarse_cells": 16,
        "refinement": 16,
        "basis_order": 4,
        "epsilons": [0.001],
        "deltas": [0.25, 0.125, 0.0625],
        "dt": 0.005,
        "final_time": 0.05
    }"#,
    );
    let output = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--threads")
        .arg("3")
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("rate delta_convergence"), "stdout: {stdout}");
}

#[test]
fn no_cache_flag_disables_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run.json", SINGLE_RUN);
    let cache = dir.path().join("cache");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&cfg)
        .arg("--cache")
        .arg(&cache)
        .arg("--no-cache")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(!cache.exists());
}
