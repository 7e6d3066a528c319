use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn zncode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zncode"))
        .args(args)
        .env_remove("ZNCODE_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn report(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn oracle_run_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "oracle.json",
        r#"{"kind": "oracle-vs-classical", "N": 2,
            "geometry": {"d": 2, "L": 2, "M": 2, "P": 1},
            "background": {"nu": {"toric": 0}, "mu": {"toric": 1}}, "seed": 3}"#,
    );
    let out = tmp.path().join("out");
    let o = zncode(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&out);
    assert_eq!(r["version"], zncode::VERSION);
    assert_eq!(r["pass"], true);
    assert_eq!(r["config"]["seed"], 3);
    assert_eq!(r["config"]["kind"], "oracle-vs-classical");
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "gauge.json",
        r#"{"kind": "gauge-prcm-marginals", "N": 2, "geometry": {"d": 2, "L": 2},
            "gauge": {"probabilities": [0.4]}, "seed": 1}"#,
    );
    let out = tmp.path().join("out");
    let o = zncode(&["run", &cfg, "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert!(o.status.success());
    assert_eq!(report(&out)["config"]["seed"], 99);
}

#[test]
fn self_dual_kw_run_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "kw.json",
        r#"{"kind": "kw-duality", "N": 3, "geometry": {"d": 2, "L": 2, "M": 1},
            "couplings": {"J": 0.7, "K": 0.7, "g": [[0.1, 0.0], [0.0, 0.05], [0.0, -0.05]]},
            "background": {"nu": {"toric": 0}, "beta_dual": {"toric": 0}}}"#,
    );
    let out = tmp.path().join("out");
    let o = zncode(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("[PASS] Trotter duality"));
}

#[test]
fn missing_modulus_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.json", r#"{"kind": "kw-duality", "geometry": {"L": 2}}"#);
    let o = zncode(&["run", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing field `N`"));
}

#[test]
fn unknown_field_names_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"kind": "kw-duality", "N": 2, "geometry": {"L": 2, "Q": 1}}"#,
    );
    let o = zncode(&["run", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("geometry.Q"), "{err}");
}

#[test]
fn non_cycle_insertion_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "bad.json",
        r#"{"kind": "oracle-vs-classical", "N": 2, "geometry": {"L": 2},
            "background": {"nu": [{"base": [0, 0], "axes": [0]}]}}"#,
    );
    let o = zncode(&["run", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("background.nu is not a cycle"));
}

#[test]
fn invalid_thread_env_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        r#"{"kind": "gauge-prcm-marginals", "N": 2, "geometry": {"L": 2}, "gauge": {"probabilities": [0.5]}}"#,
    );
    let o = Command::new(env!("CARGO_BIN_EXE_zncode"))
        .args(["run", &cfg, "--out", tmp.path().to_str().unwrap()])
        .env("ZNCODE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn scan_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scan.json",
        r#"{"kind": "sw-scan", "N": 2, "scan": {"lengths": [2], "sweeps": 40, "chains": 1, "batches": 4}}"#,
    );
    let out = tmp.path().join("out");
    let o = zncode(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("scan.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("N,P,L,p,sweeps,seed,muA,muA_err"), "{header}");
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn constants_match_closed_forms() {
    let o = zncode(&["constants", "--N", "9"]);
    assert!(o.status.success());
    let c: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((c["p_sd"].as_f64().unwrap() - 0.75).abs() < 1e-15);
    assert!((c["beta_sd"].as_f64().unwrap() - 4f64.ln()).abs() < 1e-15);
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "scan.json",
        r#"{"kind": "sw-scan", "N": 3, "scan": {"lengths": [2], "sweeps": 30, "chains": 3, "batches": 3}, "seed": 5}"#,
    );
    let mut reports = Vec::new();
    for k in ["1", "2"] {
        let out = tmp.path().join(format!("out{k}"));
        let o = zncode(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", k]);
        assert!(o.status.success());
        reports.push((
            std::fs::read(out.join("report.json")).unwrap(),
            std::fs::read(out.join("scan.csv")).unwrap(),
        ));
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn gauge_coupling_converts_to_probability() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        r#"{"kind": "gauge-prcm-marginals", "N": 3, "geometry": {"L": 2}, "couplings": {"beta_g": [0.6931471805599453]}}"#,
    );
    let out = tmp.path().join("out");
    let o = zncode(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = report(&out)["results"]["probabilities"][0]["marginals"]["probability"].as_f64().unwrap();
    assert!((p - 0.5).abs() < 1e-12);
}

#[test]
fn output_directory_can_come_from_config() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("from_config");
    let body = format!(
        r#"{{"kind": "gauge-prcm-marginals", "N": 2, "geometry": {{"L": 2}}, "gauge": {{"probabilities": [0.5]}}, "output": {:?}}}"#,
        out.to_str().unwrap()
    );
    let cfg = write_config(tmp.path(), "g.json", &body);
    assert!(zncode(&["run", &cfg]).status.success());
    assert!(out.join("report.json").exists());
}
