use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ccm_core::document::certificate_to_json;
use ccm_core::synthesis::{CcmCertificate, Domain, Mode};
use ccm_core::ControlAffineSystem;
use nalgebra::DMatrix;
use serde_json::Value;
use tempfile::TempDir;

fn ccm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Writes the bundled config and synthesizes it; returns (config, certificate).
fn prepared(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    let o = ccm(&["example", name, "--out", "."], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = ccm(&["synthesize", "--config", &format!("{name}.json")], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (
        dir.join(format!("{name}.json")),
        dir.join(format!("{name}_out/{name}_certificate.json")),
    )
}

fn edit_config(path: &Path, edit: impl FnOnce(&mut Value)) {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    edit(&mut v);
    std::fs::write(path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synthesize_verify_simulate_pipeline() {
    let tmp = TempDir::new().unwrap();
    let (cfg, cert) = prepared(tmp.path(), "double_integrator");
    assert!(cert.is_file());
    assert!(stdout(&ccm(&["verify", "--cert", s(&cert)], tmp.path())).contains("\"pass\": true"));

    let o = ccm(&["simulate", "--config", s(&cfg), "--out", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["pass"], true);
    let k_fit = summary["envelope"]["k_fit"].as_f64().unwrap();
    assert!(k_fit > 0.0 && k_fit <= summary["envelope"]["k_max"].as_f64().unwrap());
    let csv = std::fs::read_to_string(tmp.path().join("run/simulation.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,u1,xref1,xref2,uref1,error,distance\n"));
}

#[test]
fn every_example_round_trips_through_verify() {
    let tmp = TempDir::new().unwrap();
    for name in ["double_integrator", "double_integrator_gcc", "cubic_scalar", "hierarchical"] {
        let (_, cert) = prepared(tmp.path(), name);
        let o = ccm(&["verify", "--cert", s(&cert), "--samples", "2000", "--seed", "11"], tmp.path());
        assert_eq!(code(&o), 0, "{name}: {}", stderr(&o));
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (cfg, _) = prepared(tmp.path(), "cubic_scalar");
    for out in ["a", "b"] {
        assert_eq!(code(&ccm(&["simulate", "--config", s(&cfg), "--out", out], tmp.path())), 0);
    }
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("simulation.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    let o1 = stdout(&ccm(&["verify", "--cert", "cubic_scalar_out/cubic_scalar_certificate.json"], tmp.path()));
    let o2 = stdout(&ccm(&["verify", "--cert", "cubic_scalar_out/cubic_scalar_certificate.json"], tmp.path()));
    assert_eq!(o1, o2);
}

#[test]
fn uncontrollable_system_is_infeasible() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{
  "system": {"n": 1, "m": 1, "f": ["x1"], "B": [[0.0]]},
  "synthesis": {"domain": {"lower": [-1.0], "upper": [1.0]}, "basis_degree": 0}
}"#,
    )
    .unwrap();
    let o = ccm(&["synthesize", "--config", "bad.json"], tmp.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn malformed_polynomial_reports_location() {
    let tmp = TempDir::new().unwrap();
    let o = ccm(&["example", "cubic_scalar", "--out", "."], tmp.path());
    assert_eq!(code(&o), 0);
    let cfg = tmp.path().join("cubic_scalar.json");
    edit_config(&cfg, |v| v["system"]["f"][0] = "-x1^^3".into());
    let o = ccm(&["synthesize", "--config", s(&cfg)], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("column"), "{}", stderr(&o));
}

#[test]
fn tampered_certificate_fails_verification() {
    let tmp = TempDir::new().unwrap();
    let (_, cert) = prepared(tmp.path(), "double_integrator");
    edit_config(&cert, |v| {
        let l = v["lambda"].as_f64().unwrap();
        v["lambda"] = (2.0 * l).into();
    });
    let o = ccm(&["verify", "--cert", s(&cert), "--samples", "1000", "--out", "rep"], tmp.path());
    assert_eq!(code(&o), 3);
    assert!(tmp.path().join("rep/verification.json").is_file());
}

#[test]
fn usage_errors_exit_one() {
    let tmp = TempDir::new().unwrap();
    let (_, cert) = prepared(tmp.path(), "cubic_scalar");
    assert_eq!(code(&ccm(&["verify", "--cert", s(&cert), "--samples", "0"], tmp.path())), 1);
    assert_eq!(code(&ccm(&["frobnicate"], tmp.path())), 1);
    assert_eq!(code(&ccm(&["verify"], tmp.path())), 1);
    assert_eq!(code(&ccm(&["verify", "--cert", "missing.json"], tmp.path())), 1);
    let o = ccm(&["example", "nope"], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hierarchical"));
    assert_eq!(code(&ccm(&["--help"], tmp.path())), 0);
}

#[test]
fn version_mismatch_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let (_, cert) = prepared(tmp.path(), "cubic_scalar");
    edit_config(&cert, |v| v["version"] = 99.into());
    let o = ccm(&["verify", "--cert", s(&cert)], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("version"));
}

fn write_identity_certificate(dir: &Path) -> PathBuf {
    let sys = ControlAffineSystem::from_strings(&["x2", "0"], DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
    let cert = CcmCertificate::constant(&DMatrix::identity(2, 2), 1.0, Mode::Stabilize, 0.0, Domain::symmetric(2, 10.0));
    let path = dir.join("identity.json");
    std::fs::write(&path, certificate_to_json(&sys, &cert)).unwrap();
    path
}

fn distance_line(o: &Output) -> f64 {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix("distance: "))
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn geodesic_closed_forms() {
    let tmp = TempDir::new().unwrap();
    let cert = write_identity_certificate(tmp.path());
    let o = ccm(&["geodesic", "--cert", s(&cert), "--x1", "0,0", "--x2", "3,4", "--out", "g"], tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!((distance_line(&o) - 5.0).abs() < 1e-12);
    let csv = std::fs::read_to_string(tmp.path().join("g/geodesic.csv")).unwrap();
    assert!(csv.starts_with("s,x1,x2\n"));
    assert_eq!(csv.lines().count(), 1 + 33);

    let o = ccm(&["geodesic", "--cert", s(&cert), "--x1", "-1,2", "--x2", "-1,2", "--out", "g"], tmp.path());
    assert_eq!(code(&o), 0);
    assert_eq!(distance_line(&o), 0.0);

    let o = ccm(&["geodesic", "--cert", s(&cert), "--x1", "0,0", "--x2", "30,0"], tmp.path());
    assert_eq!(code(&o), 1, "endpoint outside the domain");
}

#[test]
fn far_initial_state_is_degraded() {
    let tmp = TempDir::new().unwrap();
    let (cfg, _) = prepared(tmp.path(), "cubic_scalar");
    edit_config(&cfg, |v| {
        v["simulation"]["x0"] = serde_json::json!([40.0]);
        v["simulation"]["T"] = 1.0.into();
    });
    let o = ccm(&["simulate", "--config", s(&cfg)], tmp.path());
    assert_eq!(code(&o), 4, "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn guaranteed_cost_summary_has_cost_below_bound() {
    let tmp = TempDir::new().unwrap();
    let (cfg, cert) = prepared(tmp.path(), "double_integrator_gcc");
    let o = ccm(&["simulate", "--config", s(&cfg), "--out", "run"], tmp.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let summary: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("run/summary.json")).unwrap()).unwrap();
    let (j, bound) = (summary["cost"].as_f64().unwrap(), summary["cost_bound"].as_f64().unwrap());
    assert!(0.0 < j && j <= bound, "J = {j}, bound = {bound}");

    let o = ccm(&["bound", "--cert", s(&cert), "--x0", "1,-0.5", "--xstar", "0,0"], tmp.path());
    assert_eq!(code(&o), 0);
    let printed: f64 = stdout(&o).trim().parse().unwrap();
    assert!((printed - bound).abs() <= 1e-9 * bound);
}

#[test]
fn simulate_rejects_certificate_for_another_system() {
    let tmp = TempDir::new().unwrap();
    let (cfg, _) = prepared(tmp.path(), "double_integrator");
    let other = write_identity_certificate(tmp.path());
    edit_config(&cfg, |v| v["system"]["f"][1] = "-x1".into());
    let o = ccm(&["simulate", "--config", s(&cfg), "--cert", s(&other)], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("different system"), "{}", stderr(&o));
}
