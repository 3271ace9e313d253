use std::path::Path;
use std::process::{Command, Output};

use fnl_core::calibration::balanced_instance;
use fnl_core::harness::instances::accept_positives;
use fnl_core::{Atom, Distribution, Label};

fn fnl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fnl"))
        .args(args)
        .env_remove("FNL_OUT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(path: &Path, value: &impl serde::Serialize) {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn text(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

const DP_CONFIG: &str = r#"{
  "name": "dp",
  "instance": { "family": "dp_worked" },
  "notions": ["dp"],
  "alphas": [0.01, 0.02, 0.04, 0.08],
  "grid_n": 51,
  "seed": 3
}"#;

#[test]
fn run_writes_requested_formats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dp.json");
    std::fs::write(&cfg, DP_CONFIG).unwrap();
    let out = dir.path().join("out");
    let o = fnl(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--format",
        "json",
        "--format",
        "csv",
        "--format",
        "svg",
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("verdict=linear"), "{stdout}");
    for f in ["report.json", "report.csv", "report.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let csv = text(&out.join("report.csv"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn run_overrides_and_rerender() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("dp.json");
    std::fs::write(&cfg, DP_CONFIG).unwrap();
    let out = dir.path().join("o");
    let o = fnl(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--alpha",
        "0.1",
        "--alpha",
        "0.05",
        "--alpha",
        "0.2",
        "--seed",
        "9",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&text(&out.join("report.json"))).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["config"]["alphas"], serde_json::json!([0.05, 0.1, 0.2]));
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    let again = dir.path().join("again");
    let o = fnl(&[
        "report",
        "--input",
        out.join("report.json").to_str().unwrap(),
        "--format",
        "csv",
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(text(&again.join("report.csv")), text(&out.join("report.csv")));
}

#[test]
fn bad_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fnl(&["run"])), 2);
    assert_eq!(code(&fnl(&["run", "--config", "/nonexistent/config.json"])), 2);
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, DP_CONFIG.replace("[0.01, 0.02, 0.04, 0.08]", "[0.0, 0.5]")).unwrap();
    let o = fnl(&["run", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
    assert_eq!(code(&fnl(&["certify", "--notion", "dp", "--alpha", "0.1"])), 2);
}

#[test]
fn attack_then_repair() {
    let dir = tempfile::tempdir().unwrap();
    let d = balanced_instance(0.5).unwrap();
    let dist = dir.path().join("d.json");
    write(&dist, &d);
    let out = dir.path().join("attack");
    let o = fnl(&[
        "attack",
        "--distribution",
        dist.to_str().unwrap(),
        "--kind",
        "tpr-raise",
        "--alpha",
        "0.1",
        "--target",
        "B",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["clean.json", "q.json", "d_tilde.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let dt: Distribution = serde_json::from_str(&text(&out.join("d_tilde.json"))).unwrap();
    // Q sits on x3+, which already carries 1/4 of D
    assert!((d.tv_distance(&dt) - 0.1 * 0.75).abs() <= 1e-9);

    let h = dir.path().join("h.json");
    write(&h, &accept_positives(&d));
    let rep = dir.path().join("repair");
    let o = fnl(&[
        "repair",
        "--distribution",
        dist.to_str().unwrap(),
        "--corrupted",
        out.join("d_tilde.json").to_str().unwrap(),
        "--classifier",
        h.to_str().unwrap(),
        "--notion",
        "dp",
        "--out",
        rep.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let w: serde_json::Value = serde_json::from_str(&text(&rep.join("witness.json"))).unwrap();
    let c = &w["certification"];
    assert!(c["gap"].as_f64().unwrap() <= 1e-9);
    assert!((c["alpha"].as_f64().unwrap() - 0.075).abs() <= 1e-9);
    assert!((c["excess"].as_f64().unwrap() - 0.05 / 1.3).abs() <= 1e-9);
}

#[test]
fn unrealizable_repair_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = Distribution::new(vec![
        Atom::new("a", Label::Positive, "A", 0.4),
        Atom::new("b", Label::Negative, "A", 0.1),
        Atom::new("c", Label::Positive, "B", 0.1),
        Atom::new("e", Label::Negative, "B", 0.4),
    ])
    .unwrap();
    let dist = dir.path().join("d.json");
    write(&dist, &d);
    let h = dir.path().join("h.json");
    write(&h, &accept_positives(&d));
    let o = fnl(&[
        "repair",
        "--distribution",
        dist.to_str().unwrap(),
        "--corrupted",
        dist.to_str().unwrap(),
        "--classifier",
        h.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn certify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fnl(&["certify", "--notion", "eopp", "--alpha", "0.04", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("pass=true"));
    let cert: serde_json::Value = serde_json::from_str(&text(&dir.path().join("certificate.json"))).unwrap();
    assert!(cert["floor"].as_f64().unwrap() >= 0.09);
    // the sqrt(alpha) floor is a small-budget statement
    let o = fnl(&["certify", "--notion", "eopp", "--alpha", "0.5", "--grid", "51", "--out", out]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn minimax_reports_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let o = fnl(&[
        "minimax",
        "--alpha",
        "0.1",
        "--grid",
        "51",
        "--gamma",
        "0.2",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let r: serde_json::Value = serde_json::from_str(&text(&dir.path().join("minimax.json"))).unwrap();
    assert_eq!(r["gamma_feasible"], false);
    assert!(r["max_group_error"].as_f64().unwrap() >= 0.45);
}
