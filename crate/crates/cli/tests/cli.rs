//! Drives the `packest` binary end to end.

use std::path::Path;
use std::process::{Command, Output};

fn scenario(horizon: f64, conductance: f64) -> String {
    format!(
        r#"schema = "packest-scenario/1"
name = "cli"
horizon = {horizon}
seed = 11
filters = ["cukf", "pukf"]

[pack]
cells = 6
edge_conductance = {conductance}

[drive]
c_rate = 4.0
period = 20.0
duty = 1.0
capacity_ah = 2.3

[[switching]]
start = 0.0
groups = [[1, 2], [3, 4], [5, 6]]
"#
    )
}

fn packest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_packest")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn simulate_estimate_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", &scenario(40.0, 0.1));
    let out = dir.path().join("run");
    let out_s = out.to_string_lossy();

    let sim = packest(&["simulate", &cfg, "--out", &out_s]);
    assert_eq!(sim.status.code(), Some(0), "{}", String::from_utf8_lossy(&sim.stderr));
    assert!(out.join("truth.csv").exists());

    let est = packest(&["estimate", &cfg, "--out", &out_s, "--filters", "cukf,pukf_no_thermal", "--seed", "4"]);
    assert_eq!(est.status.code(), Some(0), "{}", String::from_utf8_lossy(&est.stderr));
    assert!(out.join("estimate_cukf.csv").exists());
    assert!(out.join("estimate_pukf_no_thermal.csv").exists());
    assert!(!out.join("estimate_pukf.csv").exists());
    assert!(out.join("metrics.csv").exists() && out.join("timings.csv").exists());

    let rep = packest(&["report", &out_s]);
    assert_eq!(rep.status.code(), Some(0));
    let text = stdout(&rep);
    assert!(text.contains("40 steps, 6 cells") && text.contains("pukf_no_thermal"), "{text}");
}

#[test]
fn sample_time_override_changes_step_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.cfg", &scenario(20.0, 0.1));
    let out = dir.path().join("run");
    let o = packest(&["simulate", &cfg, "--out", &out.to_string_lossy(), "--ts", "0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("simulated 40 steps"));
}

#[test]
fn invalid_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let good = scenario(20.0, 0.1);
    let no_header = write(dir.path(), "bad.cfg", &good.replacen("schema = \"packest-scenario/1\"\n", "", 1));
    assert_eq!(packest(&["simulate", &no_header]).status.code(), Some(2));

    let cfg = write(dir.path(), "s.cfg", &good);
    assert_eq!(packest(&["estimate", &cfg, "--filters", "ekf"]).status.code(), Some(2));
    assert_eq!(packest(&["simulate", &cfg, "--ts", "-1"]).status.code(), Some(2));
    let missing = dir.path().join("nothing");
    assert_eq!(packest(&["report", &missing.to_string_lossy()]).status.code(), Some(2));
    assert_eq!(packest(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn calibration_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal");
    let out_s = out.to_string_lossy();

    let uncoupled = write(dir.path(), "u.cfg", &scenario(100.0, 0.0));
    let ok = packest(&["calibrate", &uncoupled, "--out", &out_s]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(stdout(&ok).contains("selected alpha"));
    assert!(out.join("calibration.csv").exists() && out.join("calibration_trace.csv").exists());

    // With thermal coupling the dropped cross-covariance is never covered by alpha.
    let coupled = write(dir.path(), "c.cfg", &scenario(200.0, 0.1));
    let bad = packest(&["calibrate", &coupled, "--out", &out_s]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("calibration failed"));
}
