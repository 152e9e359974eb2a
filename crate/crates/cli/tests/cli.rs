use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name]
        .iter()
        .collect();
    path.display().to_string()
}

fn etrust(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etrust"))
        .args(args)
        .env_remove("ETR_SEED")
        .output()
        .expect("binary runs")
}

fn report(args: &[&str]) -> Value {
    let out = etrust(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_of(out: &Output) -> Value {
    serde_json::from_slice::<Value>(&out.stderr).expect("stderr is a JSON object")["error"].clone()
}

fn scratch(name: &str, body: &str) -> String {
    let path = std::env::temp_dir().join(format!("etrust-cli-{}-{name}", std::process::id()));
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

#[test]
fn solve_single_point_is_exact() {
    let r = report(&["solve", &fixture("single_point.json")]);
    let rel = &r["result"]["relaxation"];
    assert!(rel["sdp_value"].as_f64().unwrap().abs() <= 1e-6);
    assert_eq!(rel["exact"], true);
    assert_eq!(r["result"]["dimension_condition"]["holds"], true);
    assert_eq!(r["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn solve_relaxation_gap_reports_gap() {
    let r = report(&["solve", &fixture("relaxation_gap.json")]);
    let rel = &r["result"]["relaxation"];
    assert!((rel["sdp_value"].as_f64().unwrap() + 1.0).abs() <= 1e-6);
    assert_eq!(rel["exact"], false);
    assert!((rel["gap"].as_f64().unwrap() - 1.0).abs() <= 1e-6);
}

#[test]
fn certify_curved_constraint() {
    let r = report(&[
        "certify",
        &fixture("curved_constraint.json"),
        "--x",
        "0,1,0",
        "--lambda",
        "1,1",
    ]);
    assert_eq!(r["result"]["verdict"]["valid"], true);
    let r = report(&[
        "certify",
        &fixture("curved_constraint.json"),
        "--x",
        "0,1,0",
        "--lambda",
        "0,0",
    ]);
    assert_eq!(r["result"]["verdict"]["valid"], false);
}

#[test]
fn other_subcommands_run() {
    let r = report(&["check", &fixture("relaxation_gap.json")]);
    assert_eq!(r["result"]["dimension_condition"]["holds"], false);
    let r = report(&["slemma", &fixture("asymptotic.json"), "--epsilon", "0.01"]);
    let lam = r["result"]["asymptotic"]["certificate"][0].as_f64().unwrap();
    assert!((lam * 0.01 - 0.25).abs() <= 0.01);
    let r = report(&["oracle", &fixture("relaxation_gap.json")]);
    assert!(r["result"]["oracle"]["value"].as_f64().unwrap().abs() <= 1e-6);
    let r = report(&["rlsp", &fixture("rlsp_matrix_norm.json"), "--samples", "500"]);
    let lambda = r["result"]["solution"]["lambda"].as_f64().unwrap();
    assert!(r["result"]["scenarios"]["max_residual"].as_f64().unwrap() <= lambda + 1e-6);
    let r = report(&["rsocp", &fixture("rsocp_two_ellipsoid.json")]);
    for c in r["result"]["constraints"].as_array().unwrap() {
        assert!(c["worst_case_residual"].as_f64().unwrap() <= c["d_squared"].as_f64().unwrap() + 1e-5);
    }
    let r = report(&[
        "probe",
        &fixture("nonconvex_image.json"),
        "--midpoints",
        "100",
        "--seed",
        "3",
    ]);
    assert!(r["result"]["violation_count"].as_u64().unwrap() >= 1);
    assert_eq!(r["seed"], 3);
}

#[test]
fn reports_are_byte_identical_across_runs() {
    for args in [
        vec!["solve".to_string(), fixture("curved_constraint.json")],
        vec![
            "probe".to_string(),
            fixture("single_point.json"),
            "--midpoints".into(),
            "200".into(),
        ],
        vec![
            "rlsp".to_string(),
            fixture("rlsp_cuts.json"),
            "--samples".into(),
            "2000".into(),
        ],
    ] {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let a = etrust(&args);
        let b = etrust(&args);
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn seed_comes_from_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_etrust"))
        .args(["probe", &fixture("single_point.json"), "--midpoints", "10"])
        .env("ETR_SEED", "17")
        .output()
        .unwrap();
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["seed"], 17);
    let out = Command::new(env!("CARGO_BIN_EXE_etrust"))
        .args(["probe", &fixture("single_point.json"), "--midpoints", "10"])
        .env("ETR_SEED", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn timings_only_on_request() {
    let r = report(&["check", &fixture("single_point.json")]);
    assert!(r.get("timings").is_none());
    let r = report(&["check", &fixture("single_point.json"), "--timings"]);
    assert!(r["timings"]["compute_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn exit_codes() {
    let out = etrust(&["solve", "/nonexistent/problem.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "invalid_input");

    let bad = scratch(
        "bad.json",
        r#"{"A": [[1.0, 2.0], [0.0, 1.0]], "a": [0, 0], "x0": [0, 0], "alpha": 1}"#,
    );
    let out = etrust(&["solve", &bad]);
    assert_eq!(out.status.code(), Some(2));

    let out = etrust(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["exit_code"], 2);

    let infeasible = scratch(
        "infeasible.json",
        r#"{"A": [[1.0]], "a": [0.0], "x0": [0.0], "alpha": 1.0, "constraints": [{"b": [1.0], "beta": -2.0}]}"#,
    );
    let out = etrust(&["solve", &infeasible]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["kind"], "infeasible");

    let out = etrust(&["slemma", &fixture("asymptotic.json"), "--epsilon", "0"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(error_of(&out)["message"].is_string());

    let out = etrust(&["solve", &fixture("single_point.json"), "--tol", "-1"]);
    assert_eq!(out.status.code(), Some(2));
}
