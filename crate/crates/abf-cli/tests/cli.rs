use std::process::{Command, Output};

use serde_json::Value;

fn abf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_abf"))
        .args(args)
        .env_remove("ABF_EPS")
        .env_remove("ABF_MAX_TERMS")
        .output()
        .expect("failed to launch abf")
}

fn json(args: &[&str]) -> Value {
    let out = abf(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn verify_single_point_succeeds() {
    let out = abf(&["verify", "--k", "3", "--x", "0.5"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["meta"]["passed"], true);
    let rows = doc["data"].as_array().unwrap();
    assert!(rows.iter().all(|r| r["pass"] == true));
    let ids: std::collections::BTreeSet<i64> = rows.iter().map(|r| r["criterion"].as_i64().unwrap()).collect();
    assert_eq!(ids.len(), 11);
}

#[test]
fn verify_rejects_unknown_criterion() {
    assert_eq!(abf(&["verify", "--criterion", "12"]).status.code(), Some(2));
}

#[test]
fn probabilities_sum_to_one() {
    let doc = json(&["lhp", "--k", "3", "--x", "0.5", "--m", "0"]);
    let total: f64 = doc["data"].as_array().unwrap().iter().map(|r| r["p"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn empty_trace_is_the_probability() {
    let q = json(&["trace-ff", "--k", "3", "--n", "0", "--a", "2", "--m", "1"]);
    let p = json(&["lhp", "--k", "3", "--x", "0.5", "--m", "1"]);
    let q = &q["data"][0]["q"];
    let p = p["data"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["a"] == 2)
        .unwrap()["p"]
        .as_f64()
        .unwrap();
    assert!((q[0].as_f64().unwrap() - p).abs() < 1e-12);
    assert!(q[1].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn ising_level_is_refused() {
    for args in [
        &["trace-ff", "--k", "2", "--n", "0"][..],
        &["scaling-ff", "--k", "2"][..],
    ] {
        let out = abf(args);
        assert_eq!(out.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&out.stderr).contains("analytic continuation"));
    }
}

#[test]
fn bad_usage_exits_two() {
    assert_eq!(abf(&["lhp", "--k", "3"]).status.code(), Some(2));
    assert_eq!(abf(&["lhp", "--k", "3", "--x", "1.5"]).status.code(), Some(2));
    assert_eq!(abf(&["trace-ff", "--k", "3", "--n", "1", "--v", "nope"]).status.code(), Some(2));
    assert_eq!(abf(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn environment_sets_the_cutoff() {
    let out = Command::new(env!("CARGO_BIN_EXE_abf"))
        .args(["lhp", "--k", "3", "--x", "0.5"])
        .env("ABF_EPS", "1e-12")
        .output()
        .unwrap();
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["meta"]["eps"].as_f64(), Some(1e-12));
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let base = ["trace-ff", "--k", "3", "--n", "1", "--a", "3", "--m", "-1,0,1,2", "--hat"];
    let run = |threads: &str| {
        let mut args = base.to_vec();
        args.extend(["--threads", threads]);
        let out = abf(&args);
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("4"));
    let s1 = abf(&["smatrix", "--k", "4", "--threads", "1"]).stdout;
    let s3 = abf(&["smatrix", "--k", "4", "--threads", "3"]).stdout;
    assert_eq!(s1, s3);
}

#[test]
fn csv_splits_complex_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    let out = abf(&[
        "smatrix", "--k", "3", "--a", "1", "--b", "1", "--points", "5", "--format", "csv", "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines().skip_while(|l| l.starts_with('#'));
    assert_eq!(lines.next(), Some("beta,a,b,s_re,s_im"));
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((f[3].hypot(f[4]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn scaling_error_shrinks() {
    let doc = json(&["scaling-ff", "--k", "3", "--a", "3"]);
    assert_eq!(doc["meta"]["monotone"], true);
    let last = doc["data"].as_array().unwrap().last().unwrap()["rel_err"].as_f64().unwrap();
    assert!(last < 5e-2);
}
