use std::path::Path;
use std::process::{Command, Output};

use sojourn_harness::output::{verdicts_from_csv, CSV_HEADER};
use sojourn_harness::runner::Verdict;

fn sojourn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sojourn"))
        .args(args)
        .env("SOJOURN_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn catalog_list_names_every_system() {
    let out = sojourn(&["catalog-list"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "friedrichs",
        "pendulum",
        "poincare_ball",
        "oscillator_covering",
    ] {
        assert!(text.contains(name), "{name} missing");
    }
    let json = sojourn(&["catalog-list", "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 11);
}

#[test]
fn kinetic_preset_writes_a_passing_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = sojourn(&["sojourn", "--preset", "kinetic", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sojourn.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some(CSV_HEADER));
    // Last row of every point: error below 1e-3.
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    for w in rows.windows(2) {
        if w[0][0] != w[1][0] {
            assert!(w[0][4].parse::<f64>().unwrap() < 1e-3);
        }
    }
    assert!(rows.last().unwrap()[4].parse::<f64>().unwrap() < 1e-3);
    let verdicts = verdicts_from_csv(&csv, 1e-3, 1e-8).unwrap();
    assert!(verdicts.values().all(|v| *v == Verdict::Pass));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn flags_override_the_preset() {
    let dir = tempfile::tempdir().unwrap();
    let out = sojourn(&[
        "sojourn",
        "--preset",
        "friedrichs",
        "--radii",
        "10,x2,5",
        "--tol",
        "1e-3",
        "--seed",
        "9",
        "--discrete",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sojourn.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",discrete")));
}

#[test]
fn empty_point_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "empty.json",
        r#"{"schema_version": 1,
            "system": {"name": "kinetic"},
            "localisation": {"kind": "radial-smooth", "dimension": 2, "rho": 2.0, "delta": 1.0},
            "points": [],
            "radii": {"r0": 10.0, "factor": 2.0, "count": 5}}"#,
    );
    let out = sojourn(&["sojourn", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty"));
}

#[test]
fn pendulum_point_outside_the_rotating_region_names_the_predicate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "pendulum.json",
        r#"{"schema_version": 1,
            "system": {"name": "pendulum", "params": {"K": 1.0}},
            "localisation": {"kind": "characteristic-ball", "dimension": 1, "rho": 2.0, "delta": 1.0},
            "points": [{"coords": [0.0, 1.0]}],
            "radii": {"r0": 2.0, "factor": 2.0, "count": 4}}"#,
    );
    let out = sojourn(&["sojourn", "--config", &cfg]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("p^2/2 > K cos^2(q/2)"));
}

#[test]
fn bad_radii_flag_is_a_config_error() {
    let out = sojourn(&["sojourn", "--preset", "kinetic", "--radii", "10,2,6"]);
    assert_eq!(code(&out), 2);
    let out = sojourn(&["sojourn", "--preset", "kinetic", "--radii", "10,x2,3"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn horizon_overrun_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sojourn(&[
        "sojourn",
        "--preset",
        "repulsive_harmonic",
        "--radii",
        "100,x10,4",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_rf_rejects_non_positive_rho() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "rf.json",
        r#"{"schema_version": 1,
            "functions": [{"kind": "radial-smooth", "dimension": 2, "rho": 0.0, "delta": 1.0}],
            "homogeneity_samples": 5, "pair_samples": 2, "discrete_samples": 1,
            "radii": {"r0": 10.0, "factor": 2.0, "count": 5}}"#,
    );
    assert_eq!(code(&sojourn(&["verify-rf", "--config", &cfg])), 2);
}

#[test]
fn verify_rf_marks_the_ball_unsupported_in_the_discrete_suite() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "rf.json",
        r#"{"schema_version": 1,
            "functions": [{"kind": "characteristic-ball", "dimension": 2, "rho": 2.0, "delta": 1.0},
                          {"kind": "radial-smooth", "dimension": 2, "rho": 2.0, "delta": 1.0}],
            "homogeneity_samples": 10, "pair_samples": 3, "discrete_samples": 2,
            "radii": {"r0": 10.0, "factor": 2.0, "count": 5}}"#,
    );
    let out = sojourn(&["verify-rf", "--config", &cfg, "--out", path(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("rf_report.json")).unwrap())
            .unwrap();
    let suites = report["suites"].as_array().unwrap();
    let ball_discrete = suites
        .iter()
        .find(|s| {
            s["suite"] == "discrete-continuous" && s["function"]["kind"] == "characteristic-ball"
        })
        .unwrap();
    assert_eq!(ball_discrete["status"], "skipped-unsupported");
    assert!(suites.iter().filter(|s| s["status"] == "pass").count() >= 4);
}

#[test]
fn quantum_subcommand_passes_and_reports_the_certified_radius() {
    let dir = tempfile::tempdir().unwrap();
    let out = sojourn(&["quantum", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("quantum.json")).unwrap())
            .unwrap();
    assert_eq!(report["max_certified_radius"], 64.0);
    assert!(dir.path().join("quantum.csv").exists());
}
