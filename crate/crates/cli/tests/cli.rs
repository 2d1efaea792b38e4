use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn choquard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choquard")).args(args).output().unwrap()
}

fn run_with(dir: &Path, mode: &str, config: &str) -> Output {
    let path = dir.join(format!("{mode}-config.json"));
    std::fs::write(&path, config).unwrap();
    let out = dir.join(mode);
    choquard(&[mode, "--config", path.to_str().unwrap(), "--output-dir", out.to_str().unwrap()])
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const ONE_D: &str = r#""dim": 1, "alpha": 0.5, "points_per_axis": 128, "box_length": 32.0, "seed_offset": 4.0"#;

#[test]
fn groundstate_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "groundstate", &format!("{{{ONE_D}, \"p\": 2.5}}"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("groundstate/groundstate.json"));
    assert!(report["report"]["residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(report["diagnostics"]["sign_change"], Value::Bool(false));
    assert!(dir.path().join("groundstate/config.json").exists());

    let field = dir.path().join("groundstate/groundstate.chqf");
    let cfg = format!(r#"{{"dim": 1, "alpha": 0.5, "p": 2.5, "field": {:?}}}"#, field.to_str().unwrap());
    let out = run_with(dir.path(), "validate", &cfg);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let printed: Value = serde_json::from_slice(&out.stdout).unwrap();
    let nehari = printed["energy"]["nehari_residual"].as_f64().unwrap();
    let h1 = printed["energy"]["h1_norm_sq"].as_f64().unwrap();
    assert!(nehari.abs() < 1e-8 * h1);
}

#[test]
fn nodal_run_reports_level_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "nodal", &format!("{{{ONE_D}, \"p\": 2.5}}"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("nodal/nodal.json"));
    assert!(report["diagnostics"]["level_gap"].as_f64().unwrap() > 0.0);
    assert!(report["diagnostics"]["lower_gap"].as_f64().unwrap() > 0.0);
    assert!(dir.path().join("nodal/nodal.chqf").exists());
}

#[test]
fn continuation_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{{{ONE_D}, \"p_schedule\": [2.4, 2.2, 2.02]}}");
    let mut csvs = Vec::new();
    for k in 0..2 {
        let sub = dir.path().join(format!("run{k}"));
        std::fs::create_dir_all(&sub).unwrap();
        let out = run_with(&sub, "continuation", &cfg);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        csvs.push(std::fs::read(sub.join("continuation/continuation.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let text = String::from_utf8(csvs.remove(0)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "p,c_nod_p,c0_p,h1_sq,h1_plus,h1_minus,pohozaev_residual");
    assert_eq!(lines.len(), 1 + 3 + 1);
    assert!(lines[4].starts_with("2e0,"));
}

#[test]
fn levels_are_sorted_by_p() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "levels", &format!("{{{ONE_D}, \"p_values\": [2.5, 2.0, 2.2]}}"));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&dir.path().join("levels/levels.json"));
    let ps: Vec<f64> = report["levels"].as_array().unwrap().iter().map(|r| r["p"].as_f64().unwrap()).collect();
    assert_eq!(ps, vec![2.0, 2.2, 2.5]);
}

#[test]
fn config_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "groundstate", r#"{"dim": 3, "alpha": 2.0, "p": 5.0}"#);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(N+α)/N < p"));
    let out = choquard(&["groundstate", "--config", "/nonexistent.json", "--output-dir", "/tmp"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(choquard(&["frobnicate"]).status.code(), Some(3));
    let out = run_with(dir.path(), "nodal", r#"{"dim": 3, "alpha": 2.0, "p": 2.5, "colour": 1}"#);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn solver_errors_exit_with_two_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_with(dir.path(), "groundstate", &format!("{{{ONE_D}, \"p\": 2.5, \"max_iters\": 1}}"));
    assert_eq!(out.status.code(), Some(2));
    let report = json(&dir.path().join("groundstate/groundstate.json"));
    assert!(report["error"].as_str().unwrap().contains("did not converge"));
}

#[test]
fn convolve_bench_reports_agreement() {
    for (dim, m) in [("1", "64"), ("3", "64")] {
        let out = choquard(&["convolve-bench", "--dim", dim, "--M", m]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert!(report["max_relative_error"].as_f64().unwrap() < 1e-12);
    }
}
