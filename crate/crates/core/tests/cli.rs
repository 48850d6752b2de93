//! End-to-end runs of the `mgmp` binary.

use std::path::Path;
use std::process::{Command, Output};

use mgmp::drivers::{SolveReport, StopReason, CSV_SCHEMA};

fn mgmp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mgmp"))
        .args(args)
        .env_remove("MGMP_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn build(dir: &Path, levels: &str) -> String {
    let h = dir.join("h").to_str().unwrap().to_string();
    let out = mgmp(&["build", "--levels", levels, "--out", &h]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    h
}

#[test]
fn build_reports_levels_and_rejects_zero_levels() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h");
    let out = mgmp(&["build", "--levels", "3", "--out", h.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    for dofs in ["24", "49", "99"] {
        assert!(stdout.contains(dofs), "{stdout}");
    }
    let out = mgmp(&["build", "--levels", "0", "--out", h.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&mgmp(&["solve"])), 1);
    assert_eq!(code(&mgmp(&["no-such-command"])), 1);
    assert_eq!(code(&mgmp(&["--help"])), 0);
    let dir = tempfile::tempdir().unwrap();
    let h = build(dir.path(), "3");
    assert_eq!(code(&mgmp(&["solve", "--hierarchy", &h, "--variant", "d-x-s-s"])), 1);
    assert_eq!(code(&mgmp(&["solve", "--hierarchy", &h, "--stop", "relres:abc"])), 1);
}

#[test]
fn solve_writes_reports_and_maps_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let h = build(dir.path(), "4");
    let json = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let out = mgmp(&[
        "solve",
        "--hierarchy",
        &h,
        "--variant",
        "d-d-s-s",
        "--stop",
        "relres:1e-8",
        "--report",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rep: SolveReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!(rep.converged);
    assert_eq!(rep.reason, StopReason::Converged);
    assert!(rep.final_rel_residual <= 1e-8);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_SCHEMA));

    let out = mgmp(&["solve", "--hierarchy", &h, "--outer", "pcg", "--stop", "relres:1e-8"]);
    assert_eq!(code(&out), 0);

    let out = mgmp(&["solve", "--hierarchy", &h, "--stop", "relres:1e-12", "--max-iter", "2"]);
    assert_eq!(code(&out), 2);

    let out = mgmp(&["report", json.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
}

#[test]
fn sweep_csv_has_schema_and_header() {
    let dir = tempfile::tempdir().unwrap();
    let h = build(dir.path(), "4");
    let csv = dir.path().join("s.csv");
    let json = dir.path().join("s.json");
    let out = mgmp(&[
        "sweep",
        "--hierarchy",
        &h,
        "--J-range",
        "2..3",
        "--out",
        csv.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_SCHEMA));
    assert_eq!(lines.next(), Some("J,dofs,iterations_double,d_dot_min,d_s_min"));
    assert_eq!(lines.count(), 2);
    assert_eq!(code(&mgmp(&["report", json.to_str().unwrap()])), 0);
    let out = mgmp(&["sweep", "--hierarchy", &h, "--J-range", "2..9"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn bounds_prints_breakdown_and_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let h = build(dir.path(), "4");
    let json = dir.path().join("b.json");
    let csv = dir.path().join("b.csv");
    let out = mgmp(&[
        "bounds",
        "--hierarchy",
        &h,
        "--variant",
        "d-d-s-s",
        "--json",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let total = v["bound"]["breakdown"]["total"].as_f64().unwrap();
    assert!(total > 0.0 && total < 0.1, "{total}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().next(), Some(CSV_SCHEMA));
    assert_eq!(code(&mgmp(&["report", json.to_str().unwrap()])), 0);
}
