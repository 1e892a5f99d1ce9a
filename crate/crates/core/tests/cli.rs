//! End-to-end tests of the `pacon run` binary: exit codes, output schemas,
//! and the file-level contract interfaces.

use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::process::{Command, Output};

use pacon::contract::load_contract;
use pacon::grid::{Path, TimeGrid};

fn data(name: &str) -> PathBuf {
    FsPath::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data")
        .join(name)
}

fn run_cli(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pacon"));
    cmd.args(args);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn report_json(dir: &FsPath) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("report.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn first_best_mode_reports_the_toy_values() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("fb");
    let result = run_cli(
        &[
            "run",
            "--config",
            data("first_best.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(result.status.success(), "{result:?}");
    let report = report_json(&out);
    assert_eq!(report["results"]["second_best"], 0.7);
    assert_eq!(report["results"]["first_best"], 1.7);
    assert_eq!(report["results"]["gap"], 1.0);
    assert_eq!(report["results"]["linear_contract_intercept"], -1.7);
    assert_eq!(report["mode"], "first-best");
    assert!(report["config_sha256"].as_str().unwrap().len() == 64);
}

#[test]
fn riccati_mode_writes_the_variance_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ric");
    let result = run_cli(
        &[
            "run",
            "--config",
            data("riccati.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(result.status.success());
    let csv = fs::read_to_string(out.join("riccati.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# pacon "));
    assert!(header.contains("config_sha256="));
    assert_eq!(lines.next().unwrap(), "t,V");
    let last = lines.last().unwrap();
    let v: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!((v - 0.5).abs() <= 1e-6, "terminal variance {v}");
}

#[test]
fn malformed_config_exits_2_and_writes_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let result = run_cli(
        &[
            "run",
            "--config",
            data("malformed.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(2));
    assert!(!out.exists(), "no output directory on validation failure");
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("steps"),
        "diagnostic names the field: {stderr}"
    );
}

#[test]
fn unknown_config_key_is_fail_closed() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    let mut text = fs::read_to_string(data("riccati.json")).unwrap();
    text = text.replace(
        "\"reservation\": 0.2",
        "\"reservation\": 0.2,\n  \"extra\": true",
    );
    fs::write(&bad, text).unwrap();
    let out = tmp.path().join("never");
    let result = run_cli(
        &[
            "run",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn invalid_thread_env_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let result = run_cli(
        &[
            "run",
            "--config",
            data("riccati.json").to_str().unwrap(),
            "--out",
            tmp.path().join("x").to_str().unwrap(),
        ],
        &[("PACON_THREADS", "zero")],
    );
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn overrides_change_the_effective_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ovr");
    let result = run_cli(
        &[
            "run",
            "--config",
            data("riccati.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "99",
            "--grid-steps",
            "500",
            "--paths",
            "7",
        ],
        &[("PACON_THREADS", "2")],
    );
    assert!(result.status.success());
    let report = report_json(&out);
    assert_eq!(report["effective"]["master_seed"], 99);
    assert_eq!(report["effective"]["steps"], 500);
    assert_eq!(report["effective"]["n_paths"], 7);
}

#[test]
fn contract_mode_payoff_is_reproducible_from_the_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("con");
    let result = run_cli(
        &[
            "run",
            "--config",
            data("contract.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        &[],
    );
    assert!(result.status.success(), "{result:?}");

    let contract = load_contract(fs::File::open(out.join("contract.json")).unwrap()).unwrap();
    let grid = TimeGrid::new(1.0, 1000).unwrap();

    // Rebuild path 0's observation and value columns from paths.csv.
    let csv = fs::read_to_string(out.join("paths.csv")).unwrap();
    let mut b_values = Vec::new();
    let mut y_last = f64::NAN;
    for line in csv.lines().skip(2) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols[1] == "0" {
            b_values.push(cols[3].parse::<f64>().unwrap());
            y_last = cols[5].parse::<f64>().unwrap();
        }
    }
    assert_eq!(b_values.len(), grid.n_nodes());
    let observed = Path::new(grid, b_values).unwrap();

    let payoff = pacon::contract::contract_payoff(&contract, &observed).unwrap();
    // The forward value at the horizon equals the payoff at scheme level.
    assert!(
        (payoff - y_last).abs() <= 1e-9,
        "payoff {payoff} vs Y_N {y_last}"
    );
    // Re-evaluation from the same files is bit-identical.
    let contract2 = load_contract(fs::File::open(out.join("contract.json")).unwrap()).unwrap();
    let payoff2 = pacon::contract::contract_payoff(&contract2, &observed).unwrap();
    assert_eq!(payoff.to_bits(), payoff2.to_bits());
}

#[test]
fn numerical_failure_exits_3() {
    // A strongly negative variance forcing drives the posterior variance
    // below zero; the Riccati solver must flag it and the CLI maps the
    // failure to exit code 3.
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("blowup.json");
    let text = fs::read_to_string(data("riccati.json")).unwrap().replace(
        r#""sigma": {"kind": "constant", "value": 0.0}"#,
        r#""sigma": {"kind": "constant", "value": -5.0}"#,
    );
    fs::write(&bad, text).unwrap();
    let result = run_cli(
        &[
            "run",
            "--config",
            bad.to_str().unwrap(),
            "--out",
            tmp.path().join("out").to_str().unwrap(),
        ],
        &[],
    );
    assert_eq!(result.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("node"), "failure names the node: {stderr}");
}

#[test]
fn verify_agent_mode_passes_on_the_benchmark() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("va");
    let result = run_cli(
        &[
            "run",
            "--config",
            data("verify_agent.json").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--paths",
            "5000",
        ],
        &[("PACON_THREADS", "2")],
    );
    assert!(result.status.success(), "{result:?}");
    let report = report_json(&out);
    assert_eq!(report["pass"], true);
    assert_eq!(report["results"]["agent"]["participation_ok"], true);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("PASS"), "{stdout}");
}
