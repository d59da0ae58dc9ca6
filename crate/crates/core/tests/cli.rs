//! End-to-end runs of the command-line tool.

use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparse-comm"))
        .args(args)
        .env_remove("SPARSE_COMM_SEED")
        .env_remove("SPARSE_COMM_WORKERS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = r#"{
    "protocol": "sparse-noninteractive", "d": 16, "s": 2, "ell": 4, "eps": 0.5,
    "n_users": 4096, "trials": 3, "seed": 5,
    "instance": {"kind": "planted_sparse", "magnitude": 0.4}
}"#;

#[test]
fn verify_passes() {
    let out = cli(&["verify", "--measure-change-cases", "100", "--chisq-cases", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 4);
}

#[test]
fn verify_reports_failure_with_status_2() {
    // zero fuzz cases cannot pass
    let out = cli(&["verify", "--chisq-cases", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn estimate_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = cli(&["estimate", "--config", &cfg, "--trial", "2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["result"]["trial"], 2);
    assert_eq!(v["estimate"].as_array().unwrap().len(), 16);
}

#[test]
fn sweep_writes_reproducible_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, workers) in [(&a, "1"), (&b, "2")] {
        let out = cli(&[
            "sweep", "--config", &cfg, "--grid", "1024,4096", "--workers", workers,
            "--output", path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 6 + 2);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let base = cli(&["estimate", "--config", &cfg]).stdout;
    let other = Command::new(env!("CARGO_BIN_EXE_sparse-comm"))
        .args(["estimate", "--config", &cfg])
        .env("SPARSE_COMM_SEED", "77")
        .output()
        .unwrap();
    assert!(other.status.success());
    assert_ne!(base, other.stdout);
    let v: serde_json::Value = serde_json::from_slice(&other.stdout).unwrap();
    assert_eq!(v["result"]["seed"], 77);
}

#[test]
fn separation_table_from_two_configs() {
    let dir = tempfile::tempdir().unwrap();
    let nonint = write_config(dir.path(), "n.json", SMALL);
    let inter = write_config(dir.path(), "i.json", &SMALL.replace("sparse-noninteractive", "sparse-interactive"));
    let table = dir.path().join("sep.csv");
    let out = cli(&[
        "sweep", "--config", &inter, "--grid", "1024,4096", "--output", "/dev/null",
        "--compare", &nonint, "--targets", "0.5,0.2",
        "--separation-output", table.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(table).unwrap();
    assert!(text.starts_with("target_error,protocol_a,n_a,protocol_b,n_b,ratio"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn find_n_and_sensing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = cli(&["find-n", "--config", &cfg, "--n-min", "16"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["n_star"].as_u64().unwrap() >= 16);

    let sensing = write_config(
        dir.path(),
        "sensing.json",
        r#"{"protocol": "sensing-interactive", "d": 32, "s": 2, "ell": 4, "m": 4, "eps": 0.5,
            "budget_constant": 12.0, "trials": 4, "seed": 1,
            "instance": {"kind": "planted_sparse", "magnitude": 0.5}}"#,
    );
    let out = cli(&["sensing", "--config", &sensing]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1 + 4 + 1);

    let out = cli(&["sensing", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_trials_and_bad_configs() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write_config(dir.path(), "empty.json", &SMALL.replace("\"trials\": 3", "\"trials\": 0"));
    let out = cli(&["sweep", "--config", &empty, "--grid", "1024"]);
    assert_eq!(out.status.code(), Some(0));

    let unknown = write_config(dir.path(), "bad.json", &SMALL.replace("sparse-noninteractive", "telepathy"));
    let out = cli(&["estimate", "--config", &unknown]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}
