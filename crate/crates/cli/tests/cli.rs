use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sle-lab")).args(args).env_remove("SLE_LAB_JOBS").output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn missing_kappa_is_usage_error() {
    let out = lab(&["check-martingale", "--r", "1", "--t", "1", "--paths", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing required key: kappa"));
}

#[test]
fn unknown_and_invalid_keys() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "kappa = 4\nwidth = 3\n").unwrap();
    let out = lab(&["simulate-trace", "--config", conf.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key: width"));
    let out = lab(&["simulate-trace", "--kappa", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kappa"));
    let out = lab(&["simulate-trace", "--kappa", "4", "--dt", "abc"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_trace_writes_csv_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let csv = dir.path().join("trace.csv");
    let conf = dir.path().join("run.conf");
    std::fs::write(&conf, "kappa = 4\nT = 2\ndt = 0.01\n").unwrap();
    let out = lab(&[
        "simulate-trace", "--config", conf.to_str().unwrap(), "--T", "1", "--out", csv.to_str().unwrap(), "--output_dir", d,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,re,im,vbound\n"));
    // the flag overrides T = 2 from the file
    assert_eq!(text.lines().count(), 1 + 101);
    let rep = read_json(&dir.path().join("simulate-trace.json"));
    assert_eq!(rep["config"]["T"], "1");
    assert_eq!(rep["config"]["kappa"], "4");
    assert_eq!(rep["config"]["seed"], "0");
    assert!(rep["version"].is_string() && rep["timestamp"].is_u64());
    assert_eq!(rep["pass"], true);
}

fn natural_csv(jobs: &str, dir: &Path, via_env: bool) -> Vec<u8> {
    let d = dir.to_str().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sle-lab"));
    cmd.args(["natural-param", "--kappa", "8/3", "--n", "16,32", "--dt", "1/512", "--paths", "12", "--seed", "5", "--output_dir", d]);
    if via_env {
        cmd.env("SLE_LAB_JOBS", jobs);
    } else {
        cmd.args(["--jobs", jobs]).env_remove("SLE_LAB_JOBS");
    }
    let out = cmd.output().unwrap();
    assert!(out.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read(dir.join("natural-param_tau.csv")).unwrap()
}

#[test]
fn csv_independent_of_jobs() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let one = natural_csv("1", dirs[0].path(), false);
    let four = natural_csv("4", dirs[1].path(), false);
    let env = natural_csv("3", dirs[2].path(), true);
    assert!(!one.is_empty());
    assert_eq!(one, four);
    assert_eq!(one, env);
}

#[test]
fn statistical_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&[
        "estimate-dimension", "--kappa", "4", "--method", "holder", "--paths", "2", "--dt", "1/1024",
        "--output_dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let out = lab(&[
        "derivative-moments", "--kappa", "8/3", "--t", "1,2", "--paths", "20", "--tol", "1e-9",
        "--output_dir", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let rep = read_json(&dir.path().join("derivative-moments.json"));
    assert_eq!(rep["pass"], false);
}

#[test]
fn bundle_counts() {
    let empty = tempfile::tempdir().unwrap();
    let out = lab(&["report-bundle", empty.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let idx = read_json(&empty.path().join("index.json"));
    assert_eq!(idx["pass"], 0);
    assert_eq!(idx["fail"], 0);
    assert_eq!(idx["entries"].as_array().unwrap().len(), 0);

    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert_eq!(lab(&["simulate-trace", "--kappa", "2", "--dt", "0.01", "--output_dir", d]).status.code(), Some(0));
    let fail = lab(&["derivative-moments", "--kappa", "8/3", "--t", "1,2", "--paths", "20", "--tol", "1e-9", "--output_dir", d]);
    assert_eq!(fail.status.code(), Some(1));
    let out = lab(&["report-bundle", d]);
    assert_eq!(out.status.code(), Some(1));
    let idx = read_json(&dir.path().join("index.json"));
    assert_eq!((idx["pass"].as_u64(), idx["fail"].as_u64()), (Some(1), Some(1)));
    assert!(dir.path().join("tables/derivative-moments_moments.csv").exists());

    std::fs::write(dir.path().join("broken.json"), "{ not json").unwrap();
    let out = lab(&["report-bundle", d]);
    assert_eq!(out.status.code(), Some(1));
    let idx = read_json(&dir.path().join("index.json"));
    assert_eq!(idx["unreadable"][0], "broken.json");
}

#[test]
fn diffusion_and_green_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = lab(&["diffusion-stats", "--kind", "exp-moment", "--q", "1", "--paths", "2000", "--output_dir", d]);
    assert!(out.status.code().unwrap() <= 1);
    let rep = read_json(&dir.path().join("diffusion-stats.json"));
    assert!(rep["result"]["zscore"].is_number());
    let out = lab(&["green-function", "--kappa", "4", "--z", "i", "--paths", "500", "--output_dir", d]);
    assert!(out.status.code().unwrap() <= 1, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("green-function_one_point.csv").exists());
    let out = lab(&["green-function", "--kappa", "9", "--output_dir", d]);
    assert_eq!(out.status.code(), Some(2));
}
