use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_spikedcorr"));
    c.env_remove("SPIKEDCORR_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("JSON on stdout")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn predict_constant_correlation() {
    let out = run(&["predict", "--model", "const-corr:m=10,r=0.9", "--gamma", "0.5", "--n", "1000", "--nu", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    let ev = &v["spikes"][0]["eigenvalue"];
    assert!((ev["rho"].as_f64().unwrap() - 9.661_728_395).abs() < 1e-8);
    assert!((ev["var_total"].as_f64().unwrap() - 2.720_484).abs() < 1e-5);
    assert_eq!(v["config"]["model"], "const-corr:m=10,r=0.9");
    assert_eq!(v["config"]["n"], 1000);
}

#[test]
fn predict_subcritical() {
    let out = run(&["predict", "--model", "const-corr:m=4,r=0.1", "--gamma", "1", "--nu", "1"]);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    let s = &v["spikes"][0];
    assert_eq!(s["class"], "Subcritical");
    assert_eq!(s["subcritical"]["eigenvalue_limit"], 4.0);
    assert_eq!(s["subcritical"]["projection_sq_limit"], 0.0);
    assert!(s.get("eigenvalue").is_none());
}

#[test]
fn malformed_model_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = run(&["predict", "--model", "const-corr:m=10,q=0.9", "--gamma", "0.5", "--output", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(!path.exists());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn critical_spike_is_a_domain_error() {
    let out = run(&["predict", "--model", "const-corr:m=4,r=0.3333333333333333", "--gamma", "1"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("phase transition"));
}

#[test]
fn usage_errors() {
    assert_eq!(code(&run(&["reproduce", "fig3"])), 2);
    assert_eq!(code(&run(&["predict", "--model", "const-corr:m=4,r=0.5", "--gamma", "1", "--p", "10", "--n", "20"])), 2);
    assert_eq!(code(&run(&["predict", "--gamma", "1"])), 2);
    assert_eq!(code(&run(&["verify", "--suite", "nightly"])), 2);
    assert_eq!(code(&run(&["simulate", "--model", "const-corr:m=4,r=0.8", "--n", "200", "--p", "50", "--replicates", "10"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn simulate_is_reproducible_across_workers() {
    let args = ["simulate", "--model", "const-corr:m=3,r=0.8", "--n", "200", "--p", "50", "--replicates", "100", "--seed", "4"];
    let a = bin().args(args).args(["--threads", "1"]).output().unwrap();
    let b = bin().args(args).env("SPIKEDCORR_THREADS", "3").output().unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let v = json(&a);
    assert_eq!(v["config"]["seed"], 4);
    assert_eq!(v["config"]["model"], "const-corr:m=3,r=0.8");
    assert!(v.get("runtime").is_none());
}

#[test]
fn csv_headers_are_stable() {
    let out = run(&["simulate", "--model", "const-corr:m=3,r=0.8", "--n", "200", "--p", "50", "--replicates", "100", "--format", "csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "r,gamma,m,n,stat,theory,empirical,se,verdict");
    assert!(text.lines().nth(1).unwrap().starts_with("0.8,0.25,3,200,"));
}

#[test]
fn verify_reports_failure_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.json");
    let out = run(&[
        "verify", "--experiment", "subcritical", "--model", "const-corr:m=4,r=0.1", "--n", "20", "--p", "20",
        "--replicates", "5", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["passed"], false);
}

#[test]
fn verify_single_experiment_passes() {
    let out = run(&[
        "verify", "--experiment", "eigenvector-clt", "--model", "const-corr:m=3,r=0.8", "--n", "300", "--gamma", "0.25",
        "--replicates", "200", "--projections", "2:2,2:3",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["config"]["p"], 75);
}

#[test]
fn reproduce_tables() {
    let out = run(&["reproduce", "fig2b", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "r,m,gamma,Sigma_cov_22,Sigma_corr_22");
    let out = run(&["reproduce", "fig1a", "--replicates", "100", "--format", "csv"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next().unwrap(), "bin_lo,bin_hi,count_cov,count_corr");
    assert_eq!(text.lines().count(), 41);
}

#[test]
fn cumulant_dump_and_model_files() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.json");
    let body = r#"{"m":2,"sigma":[1.0,0.5,0.5,1.0],"dist":{"kind":"linear_mixing","family":"rademacher"}}"#;
    std::fs::write(&model, body).unwrap();
    let out = run(&["cumulants", "--model", model.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["kappa"]["shape"], serde_json::json!([2, 2, 2, 2]));
    assert_eq!(v["kappa"]["values"][0], -2.0);
    assert_eq!(std::fs::read_to_string(&model).unwrap(), body);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"model":"const-corr:m=10,r=0.9","gamma":0.5,"nu":[1]}"#).unwrap();
    let out_path = dir.path().join("p.json");
    let out = run(&["predict", "--config", cfg.to_str().unwrap(), "--output", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(Path::new(&out_path)).unwrap()).unwrap();
    assert_eq!(v["config"]["gamma"], 0.5);
    // Flags override the file.
    let out = run(&["predict", "--config", cfg.to_str().unwrap(), "--gamma", "0.25"]);
    assert_eq!(json(&out)["gamma"], 0.25);
    std::fs::write(&cfg, r#"{"modle":"x"}"#).unwrap();
    assert_eq!(code(&run(&["predict", "--config", cfg.to_str().unwrap()])), 2);
}
