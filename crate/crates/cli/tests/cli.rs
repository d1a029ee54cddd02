//! Runs the `swarm-mpc` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn swarm_mpc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swarm-mpc"))
        .args(args)
        .env("SWARM_MPC_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn run_smoke(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--scenario", "unicycle-swap-2-smoke", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    swarm_mpc(&args)
}

#[test]
fn run_writes_trajectory_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_smoke(dir.path(), &["--optimizer", "tsallis", "--mode", "distributed", "--seed", "7"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let log = fs::read_to_string(dir.path().join("trajectory.jsonl")).unwrap();
    let lines: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2 * 21 + 1);
    assert_eq!(lines.last().unwrap()["summary"], true);
    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    for key in ["completion_rate", "inter_agent_collisions", "obstacle_collisions", "trajectory_cost", "wall_time"] {
        assert!(metrics["metrics"].get(key).is_some(), "missing {key}");
    }
}

#[test]
fn overrides_are_echoed_into_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_smoke(
        dir.path(),
        &["--optimizer", "cem", "--mode", "centralized", "--seed", "99", "--samples", "48", "--admm-iters", "4", "--steps", "6"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["optimizer"], "cem");
    assert_eq!(m["mode"], "centralized");
    let c = &m["config"];
    assert_eq!(c["sampler"]["shape"]["kind"], "cem");
    assert_eq!(c["mode"]["kind"].as_str().or(c["mode"].as_str()), Some("centralized"));
    assert_eq!(c["seed"], 99);
    assert_eq!(c["sampler"]["m_sample"], 48);
    assert_eq!(c["consensus"]["admm_iters"], 4);
    assert_eq!(c["horizons"]["T"], 6);
    let lines = fs::read_to_string(dir.path().join("trajectory.jsonl")).unwrap().lines().count();
    assert_eq!(lines, 2 * 7 + 1);
}

#[test]
fn identical_invocations_write_identical_logs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_smoke(a.path(), &["--seed", "3"]).status.success());
    assert!(run_smoke(b.path(), &["--seed", "3"]).status.success());
    let la = fs::read(a.path().join("trajectory.jsonl")).unwrap();
    let lb = fs::read(b.path().join("trajectory.jsonl")).unwrap();
    assert_eq!(la, lb);
}

#[test]
fn list_prints_the_builtins() {
    let out = swarm_mpc(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 6);
    for name in ["unicycle-swap-4", "dubins-formation-8", "quadcopter-formation-4", "dubins-obstacle-1"] {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn bench_smoke_reports_every_optimizer_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let out = swarm_mpc(&["bench", "--suite", "smoke", "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<Value> = fs::read_to_string(dir.path().join("report.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 6);
    assert!(dir.path().join("report.txt").exists());
}

#[test]
fn configuration_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ not json").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--scenario", "no-such-scenario"],
        vec!["run", "--scenario", bad.to_str().unwrap()],
        vec!["run", "--scenario", "unicycle-swap-2-smoke", "--optimizer", "gradient-descent"],
        vec!["run", "--scenario", "unicycle-swap-2-smoke", "--mode", "hierarchical"],
        vec!["run", "--scenario", "unicycle-swap-2-smoke", "--samples", "0"],
        vec!["bench", "--suite", "enormous"],
    ];
    for args in cases {
        let mut args = args.clone();
        let out_dir = dir.path().join("out");
        args.extend(["--out", out_dir.to_str().unwrap()]);
        let out = swarm_mpc(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn invalid_thread_count_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_swarm-mpc"))
        .args(["run", "--scenario", "unicycle-swap-2-smoke", "--out", dir.path().to_str().unwrap()])
        .env("SWARM_MPC_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
