use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn npcpm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npcpm"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_GRAPH: &[&str] = &[
    "--synthetic",
    "--synthetic-count",
    "14",
    "--test-count",
    "4",
    "--min-neighbors",
    "3",
];

#[test]
fn solve_economic_reaches_reference_objective() {
    let dir = tempfile::tempdir().unwrap();
    let out = npcpm(&["solve", "economic", "--rho", "0.009", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = summary(dir.path());
    let obj = v["objective"].as_f64().unwrap();
    assert!((obj - 133.723).abs() / 133.723 < 5e-3, "objective {obj}");
    assert!(v["ineq_violation"].as_f64().unwrap() <= 1e-3);
    assert_eq!(v["rho_exceeds_bound"], Value::Bool(true));
    assert_eq!(v["config"]["rho"].as_f64(), Some(0.009));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iter,objective,lin_residual,ineq_violation,step_norm,pc_gap,dist_to_ref\n"));
}

#[test]
fn solve_modified_economic() {
    let dir = tempfile::tempdir().unwrap();
    let out = npcpm(&["solve", "economic-modified", "--rho", "0.009", "--out", s(dir.path())]);
    assert!(out.status.success());
    let obj = summary(dir.path())["objective"].as_f64().unwrap();
    assert!((obj - 133.687).abs() / 133.687 < 5e-3, "objective {obj}");
}

#[test]
fn validation_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    assert_eq!(npcpm(&["solve", "economic", "--rho", "-1", "--out", o]).status.code(), Some(1));
    assert_eq!(npcpm(&["solve", "no-such-instance", "--out", o]).status.code(), Some(1));
    assert_eq!(npcpm(&["solve", "economic", "--tau", "2"]).status.code(), Some(1));
    assert_eq!(npcpm(&["graph", "--out", o]).status.code(), Some(1));

    let out = npcpm(&["async", "--synthetic", "--reform", "copy", "--out", o]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("slack"));

    // tau from a config file is just as foreign to a synchronous solve
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"instance": "economic", "tau": 4}"#).unwrap();
    assert_eq!(npcpm(&["solve", "--config", s(&cfg), "--out", o]).status.code(), Some(1));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent.csv");
    let out = npcpm(&["graph", "--data", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));

    let bad = dir.path().join("bad.csv");
    std::fs::write(
        &bad,
        "beds,baths,sq__ft,price,latitude,longitude\n3,2,1000,100000,38.5,-121.4\n2,1,900,90000,north,-121.4\n",
    )
    .unwrap();
    let out = npcpm(&["graph", "--data", s(&bad), "--test-count", "0", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 3"));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"instance": "quad-equality", "rho": 0.2, "stop_tol": 1e-9, "max_iters": 50}"#).unwrap();
    let out = npcpm(&["solve", "--config", s(&cfg), "--rho", "0.3", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let c = &summary(dir.path())["config"];
    assert_eq!(c["rho"].as_f64(), Some(0.3));
    assert_eq!(c["stop_tol"].as_f64(), Some(1e-9));
    assert_eq!(c["max_iters"].as_u64(), Some(50));
    assert_eq!(c["epsilon_margin"].as_f64(), Some(0.1));
}

#[test]
fn graph_runs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let mut args = vec!["graph", "--seed", "7", "--out", s(d.path())];
        args.extend_from_slice(SMALL_GRAPH);
        assert!(npcpm(&args).status.success());
    }
    for f in ["trace.csv", "solution.txt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let v = summary(a.path());
    assert!(v["mse"].as_f64().unwrap().is_finite());
    assert_eq!(v["data"]["train"].as_u64(), Some(10));
}

#[test]
fn slack_needs_fewer_iterations_than_copy() {
    let mut iters = Vec::new();
    for reform in ["slack", "copy"] {
        let d = tempfile::tempdir().unwrap();
        let mut args = vec!["graph", "--reform", reform, "--rho", "0.06", "--out", s(d.path())];
        args.extend_from_slice(SMALL_GRAPH);
        let out = npcpm(&args);
        assert!(out.status.success());
        let v = summary(d.path());
        assert_eq!(v["converged"], Value::Bool(true));
        iters.push((v["iterations"].as_u64().unwrap(), v["objective"].as_f64().unwrap()));
    }
    assert!(iters[0].0 < iters[1].0, "{iters:?}");
    assert!((iters[0].1 - iters[1].1).abs() <= 1e-4 * iters[0].1.abs());
}

#[test]
fn omega_sweep_writes_one_row_per_value() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["graph", "--sweep-omega", "0.1,1,10", "--out", s(d.path())];
    args.extend_from_slice(SMALL_GRAPH);
    assert!(npcpm(&args).status.success());
    let table = std::fs::read_to_string(d.path().join("omega_sweep.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "omega,mse,iterations,converged,objective");
    assert_eq!(lines.len(), 4);
    assert!(summary(d.path())["best_omega"].as_f64().is_some());
}

#[test]
fn async_tau_one_trace_matches_sync() {
    let sync_dir = tempfile::tempdir().unwrap();
    let async_dir = tempfile::tempdir().unwrap();
    let common = ["--rho", "0.05", "--max-iters", "300", "--stop-tol", "1e-9", "--reg-mu", "1"];
    let mut a = vec!["graph", "--out", s(sync_dir.path())];
    a.extend_from_slice(SMALL_GRAPH);
    a.extend_from_slice(&common);
    assert!(npcpm(&a).status.success());
    let mut b = vec!["async", "--tau", "1", "--no-reference", "--out", s(async_dir.path())];
    b.extend_from_slice(SMALL_GRAPH);
    b.extend_from_slice(&common);
    let out = npcpm(&b);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let sync_trace = std::fs::read_to_string(sync_dir.path().join("trace.csv")).unwrap();
    let async_trace = std::fs::read_to_string(async_dir.path().join("trace.csv")).unwrap();
    let sync_rows: Vec<_> = sync_trace.lines().skip(1).collect();
    let async_rows: Vec<_> = async_trace.lines().skip(1).collect();
    assert_eq!(sync_rows.len(), async_rows.len());
    for (x, y) in sync_rows.iter().zip(&async_rows) {
        let (head, time) = y.rsplit_once(',').unwrap();
        assert_eq!(*x, head);
        assert!(time.parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn tau_sweep_table() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec![
        "async", "--tau-sweep", "1,2,4", "--rho", "0.01", "--reg-mu", "1", "--max-iters", "400",
        "--out", s(d.path()),
    ];
    args.extend_from_slice(SMALL_GRAPH);
    let out = npcpm(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(d.path().join("tau_sweep.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines[0], "tau,iterations,converged,sim_time,max_staleness,ergodic_pass,dist_to_ref");
    assert_eq!(lines.len(), 4);
    for tau in [1, 2, 4] {
        let trace = std::fs::read_to_string(d.path().join(format!("trace_tau_{tau}.csv"))).unwrap();
        assert!(trace.lines().next().unwrap().ends_with(",sim_time"));
    }
    let staleness: Vec<usize> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    assert!(staleness.iter().zip([1, 2, 4]).all(|(s, t)| *s < t));
}

#[test]
fn async_on_a_builtin_instance() {
    let d = tempfile::tempdir().unwrap();
    let out = npcpm(&["async", "--instance", "quad-equality", "--tau", "2", "--rho", "0.1", "--out", s(d.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = &summary(d.path())["runs"][0];
    assert_eq!(run["converged"], Value::Bool(true));
    assert_eq!(run["ergodic"]["pass"], Value::Bool(true));

    let out = npcpm(&["async", "--instance", "economic", "--out", s(d.path())]);
    assert_eq!(out.status.code(), Some(1));
}
