use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rydberg-mis"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn gen(dir: &Path, name: &str, extra: &[&str]) -> String {
    let path = dir.join(name).display().to_string();
    let mut args = vec!["gen", "--atoms", "5", "--seed", "3", "--out", &path];
    args.extend_from_slice(extra);
    let out = bin(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn gen_then_solve_writes_report_and_histogram() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen(dir.path(), "inst.json", &[]);
    let report = dir.path().join("report.json");
    let out = bin(&[
        "solve",
        "--instance",
        &inst,
        "--shots",
        "300",
        "--seed",
        "9",
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let r = json(&report);
    for key in ["config", "plan", "validation", "histogram_file", "oracle", "metrics"] {
        assert!(r.get(key).is_some(), "missing {key}");
    }
    assert_eq!(r["config"]["shots"], 300);
    assert_eq!(r["config"]["tau"], 0.9);
    let p = r["metrics"]["success_probability"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(r["oracle"]["optimum"].as_f64().unwrap() >= 1.0);

    let csv = fs::read_to_string(r["histogram_file"].as_str().unwrap()).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("bitstring,count,probability"));
    let counts: Vec<u64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(counts.iter().sum::<u64>(), 300);
    assert!(counts.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn solve_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen(dir.path(), "inst.json", &["--weighted"]);
    let run = |name: &str| {
        let path = dir.path().join(name);
        let out = bin(&["solve", "--instance", &inst, "--shots", "200", "--out", path.to_str().unwrap()]);
        assert!(out.status.success());
        let mut v = json(&path);
        v.as_object_mut().unwrap().remove("wall_clock");
        v.as_object_mut().unwrap().remove("histogram_file");
        v
    };
    let a = run("a.json");
    assert!(a["metrics"]["optimality_ratio"].is_number() || a["metrics"]["optimality_ratio"].is_null());
    assert_eq!(a, run("b.json"));
}

#[test]
fn config_file_and_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen(dir.path(), "inst.json", &[]);
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, format!(r#"{{"instance": {inst:?}, "method": "dmm", "shots": 50, "seed": 4}}"#)).unwrap();
    let out = bin(&["solve", "--config", cfg.to_str().unwrap(), "--shots", "70"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["method"], "dmm");
    assert_eq!(r["config"]["shots"], 70);
    assert_eq!(r["plan"]["dmm_policy"], "intent");
}

#[test]
fn compare_keeps_method_order() {
    let dir = tempfile::tempdir().unwrap();
    let inst = gen(dir.path(), "inst.json", &["--weighted"]);
    let out = bin(&["compare", "--instance", &inst, "--shots", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let t: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = t["rows"].as_array().unwrap();
    let methods: Vec<_> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(methods, ["local", "dmm", "global", "baseline"]);
    assert_eq!(rows[2]["status"], "unsupported");
    assert_eq!(rows[3]["status"], "unsupported");
}

#[test]
fn validate_reports_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"positions": [[0, 0], [3, 0], [40, 0]]}"#).unwrap();
    let out = bin(&["validate", "--instance", bad.to_str().unwrap()]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["valid"], false);
    let rules: Vec<_> = v["violations"].as_array().unwrap().iter().map(|x| x["rule"].as_str().unwrap()).collect();
    assert!(rules.contains(&"min_distance") && rules.contains(&"confinement_radius"));
}

#[test]
fn pipeline_errors_exit_nonzero() {
    let out = bin(&["solve", "--instance", "/nonexistent/instance.json"]);
    assert!(!out.status.success());

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"positions": [[0, 0], [3, 0]]}"#).unwrap();
    let out = bin(&["solve", "--instance", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("register"));

    let ok = gen(dir.path(), "inst.json", &[]);
    let out = bin(&["solve", "--instance", &ok, "--shots", "600", "--hardware-fidelity"]);
    assert!(!out.status.success());
}
