use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(dir: &Path, command: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join(format!("{command}.config.json"));
    std::fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_degenlab"))
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn constant_weight_profile() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "weight", r#"{"command": "weight", "kind": "constant"}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = read_json(&dir.path().join("out/weight.json"));
    assert_eq!(report["profile"]["a2"].as_f64(), Some(1.0));
    let manifest = read_json(&dir.path().join("out/manifest.json"));
    assert_eq!(manifest["status"], "ok");
    assert_eq!(manifest["config"]["kind"], "constant");
    for key in ["config", "seed", "started", "elapsed_s", "outputs", "status"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
}

#[test]
fn flat_quadratic_estimate_is_one_half() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "qest", "B": {"type": "identity"}, "w": {"kind": "constant"}, "N": 128}"#;
    let out = run(dir.path(), "qest", cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let sup = read_json(&dir.path().join("out/qest.json"))["sup"].as_f64().unwrap();
    assert!((sup / 0.5 - 1.0).abs() <= 0.02, "sup = {sup}");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "qest", "w": {"kind": "power", "a": 0.5},
        "B": {"type": "random", "seed": 2, "level": 3, "amplitude": 0.4, "hermitian": false}, "N": 32}"#;
    run(dir.path(), "qest", cfg, &["--seed", "5"]);
    let first = std::fs::read(dir.path().join("out/qest.json")).unwrap();
    run(dir.path(), "qest", cfg, &["--seed", "5"]);
    let second = std::fs::read(dir.path().join("out/qest.json")).unwrap();
    assert_eq!(first, second);
    assert_eq!(read_json(&dir.path().join("out/manifest.json"))["seed"], 5);
}

#[test]
fn malformed_config_exits_one_and_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "qest", r#"{"command": "qest", "N": 64, "probes": "many"}"#, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("probes"));
    let out = run(dir.path(), "bvp", "{\"command\": \"bvp\",", &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 1"));
}

#[test]
fn non_accretive_coefficients_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "spec", "B": {"type": "scalar", "theta": 2.0}, "N": 16}"#;
    let out = run(dir.path(), "spec", cfg, &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_json(&dir.path().join("out/manifest.json"))["status"], "precondition");
}

#[test]
fn suite_subset_writes_csv_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"command": "suite", "profile": "smoke", "criteria": [1, 2], "format": "csv"}"#;
    let out = run(dir.path(), "suite", cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/suite.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "id,value,bound,pass");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",true"));
}

#[test]
fn corona_and_bvp_commands_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "corona", r#"{"weight": {"kind": "power", "a": 0.5}, "sigma_w": 0.2, "depth": 8}"#, &[]);
    assert_eq!(out.status.code(), Some(0));
    let tree = read_json(&dir.path().join("out/corona.json"));
    assert_eq!(tree["rule_violation"].as_f64(), Some(0.0));
    let out = run(dir.path(), "bvp", r#"{"N": 32, "problem": "dirichlet"}"#, &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
