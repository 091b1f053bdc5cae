use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::info;
use npcpm::asynchronous::{self as asynch, AsyncConfig, DelayModel, WorkerCompute};
use npcpm::graph::{self, CsvOptions, RegressionSpec, SpatialGraph, Split};
use npcpm::sync::{self, SaddlePoint, SolverConfig};
use npcpm::{trace, BlockProblem};
use serde::Serialize;
use serde_json::json;

use crate::config::{Command, RunConfig};
use crate::CliError;

pub fn execute(c: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&c.out)?;
    match c.command {
        Command::Solve => solve(c),
        Command::Sweep => sweep(c),
        Command::Graph => graph_cmd(c),
        Command::Async => async_cmd(c),
    }
}

fn solver_config(c: &RunConfig, rho: f64) -> SolverConfig {
    SolverConfig {
        rho,
        epsilon_margin: c.epsilon_margin,
        max_iters: c.max_iters,
        stop_tol: c.stop_tol,
        parallel_blocks: c.parallel,
        trace_stride: c.trace_stride,
        ..SolverConfig::default()
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::Runtime(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_table(path: &Path, header: &str, lines: &[String]) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{header}")?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn instance(c: &RunConfig) -> Result<npcpm::bench::BenchmarkInstance, CliError> {
    let name = c.instance.as_deref().unwrap_or_default();
    npcpm::bench::instance_by_name(name)
        .ok_or_else(|| CliError::Validation(format!("unknown instance '{name}'")))
}

fn solve(c: &RunConfig) -> Result<(), CliError> {
    let inst = instance(c)?;
    let mut cfg = solver_config(c, c.rho);
    cfg.reference_point = inst.reference_saddle.clone();
    info!("solving {} with rho {}", inst.name, c.rho);
    let out = sync::run(&inst.problem, &cfg)?;
    trace::write_trace_file(&c.out.join("trace.csv"), &out.trace, false)?;
    let last = out.last().copied();
    let objective = inst.problem.evaluate_objective(&out.state.x)?;
    let relative_error = inst
        .reference_objective
        .map(|r| (objective - r).abs() / r.abs().max(f64::MIN_POSITIVE));
    info!(
        "{} iterations, converged {}, objective {objective:.6}",
        out.iterations, out.converged
    );
    write_json(
        &c.out.join("summary.json"),
        &json!({
            "config": c,
            "instance": inst.name,
            "objective": objective,
            "reference_objective": inst.reference_objective,
            "relative_error": relative_error,
            "lin_residual": last.map(|r| r.lin_residual),
            "ineq_violation": last.map(|r| r.ineq_violation),
            "iterations": out.iterations,
            "converged": out.converged,
            "rho_bound": out.rho_bound,
            "rho_exceeds_bound": out.rho_exceeds_bound,
            "warnings": out.warnings,
            "x": npcpm::bench::join_blocks(&out.state.x),
            "lambda": out.state.lambda.as_slice(),
            "mu": out.state.mu.as_slice(),
        }),
    )
}

fn sweep(c: &RunConfig) -> Result<(), CliError> {
    let inst = instance(c)?;
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for &rho in c.rhos.as_deref().unwrap_or_default() {
        let mut cfg = solver_config(c, rho);
        cfg.reference_point = inst.reference_saddle.clone();
        info!("{}: rho {rho}", inst.name);
        let out = sync::run(&inst.problem, &cfg)?;
        trace::write_trace_file(&c.out.join(format!("trace_rho_{rho}.csv")), &out.trace, false)?;
        let objective = inst.problem.evaluate_objective(&out.state.x)?;
        let last = out.last().copied();
        lines.push(format!(
            "{rho},{},{},{objective},{},{},{},{}",
            out.iterations,
            out.converged,
            opt(last.map(|r| r.lin_residual)),
            opt(last.map(|r| r.ineq_violation)),
            out.rho_exceeds_bound,
            opt(last.and_then(|r| r.dist_to_ref)),
        ));
        rows.push(json!({
            "rho": rho,
            "iterations": out.iterations,
            "converged": out.converged,
            "objective": objective,
            "rho_exceeds_bound": out.rho_exceeds_bound,
        }));
    }
    write_table(
        &c.out.join("sweep.csv"),
        "rho,iterations,converged,objective,lin_residual,ineq_violation,rho_exceeds_bound,dist_to_ref",
        &lines,
    )?;
    write_json(
        &c.out.join("summary.json"),
        &json!({"config": c, "instance": inst.name, "runs": rows}),
    )
}

struct GraphData {
    split: Split,
    graph: SpatialGraph,
}

fn load_graph(c: &RunConfig) -> Result<GraphData, CliError> {
    let rows = match &c.data {
        Some(path) => graph::read_housing_file(
            path,
            CsvOptions {
                zero_is_missing: c.zero_is_missing,
            },
        )?,
        None => graph::synthetic_rows(c.synthetic_count, c.seed),
    };
    let split = graph::standardize_and_split(&rows, c.test_count, c.seed)?;
    let graph = graph::build_graph_weighted(&split.train, c.neighbor_radius, c.min_neighbors, c.edge_weight)?;
    info!(
        "{} rows: {} train, {} test; graph has {} vertices and {} edges",
        rows.len(),
        split.train.len(),
        split.test.len(),
        graph.vertices.len(),
        graph.edges.len()
    );
    Ok(GraphData { split, graph })
}

fn spec(c: &RunConfig, omega: f64) -> RegressionSpec {
    RegressionSpec {
        omega,
        reg_mu: c.reg_mu,
        ..RegressionSpec::default()
    }
}

struct GraphRun {
    out: sync::RunOutcome,
    objective: f64,
    mse: Option<f64>,
}

fn solve_graph(c: &RunConfig, data: &GraphData, omega: f64) -> Result<GraphRun, CliError> {
    let spec = spec(c, omega);
    let problem = graph::reformulate(&data.graph, &spec, c.reform)?;
    let out = sync::run(&problem, &solver_config(c, c.rho))?;
    let vertices = &out.state.x[..data.graph.vertices.len()];
    let objective = graph::network_objective(&data.graph, &spec, vertices);
    let mse = if data.split.test.is_empty() {
        None
    } else {
        Some(graph::evaluate_mse(&data.split.test, vertices, &data.graph)?)
    };
    info!(
        "omega {omega}: {} iterations, converged {}, objective {objective:.6}, mse {}",
        out.iterations,
        out.converged,
        opt(mse)
    );
    Ok(GraphRun { out, objective, mse })
}

fn graph_cmd(c: &RunConfig) -> Result<(), CliError> {
    let data = load_graph(c)?;
    let shape = json!({
        "train": data.split.train.len(),
        "test": data.split.test.len(),
        "vertices": data.graph.vertices.len(),
        "edges": data.graph.edges.len(),
    });
    if let Some(omegas) = &c.sweep_omega {
        let mut lines = Vec::new();
        let mut best: Option<(f64, f64)> = None;
        for &omega in omegas {
            let run = solve_graph(c, &data, omega)?;
            trace::write_trace_file(&c.out.join(format!("trace_omega_{omega}.csv")), &run.out.trace, false)?;
            lines.push(format!(
                "{omega},{},{},{},{}",
                opt(run.mse),
                run.out.iterations,
                run.out.converged,
                run.objective
            ));
            if let Some(m) = run.mse {
                if best.is_none_or(|(_, b)| m < b) {
                    best = Some((omega, m));
                }
            }
        }
        write_table(&c.out.join("omega_sweep.csv"), "omega,mse,iterations,converged,objective", &lines)?;
        return write_json(
            &c.out.join("summary.json"),
            &json!({
                "config": c,
                "data": shape,
                "best_omega": best.map(|b| b.0),
                "best_mse": best.map(|b| b.1),
            }),
        );
    }
    let run = solve_graph(c, &data, c.omega)?;
    trace::write_trace_file(&c.out.join("trace.csv"), &run.out.trace, false)?;
    let vertices = &run.out.state.x[..data.graph.vertices.len()];
    graph::write_solution(BufWriter::new(File::create(c.out.join("solution.txt"))?), vertices)?;
    write_json(
        &c.out.join("summary.json"),
        &json!({
            "config": c,
            "data": shape,
            "objective": run.objective,
            "mse": run.mse,
            "iterations": run.out.iterations,
            "converged": run.out.converged,
            "rho_bound": run.out.rho_bound,
            "rho_exceeds_bound": run.out.rho_exceeds_bound,
            "warnings": run.out.warnings,
        }),
    )
}

fn reference_solution(c: &RunConfig, problem: &BlockProblem) -> Result<SaddlePoint, CliError> {
    let cfg = SolverConfig {
        rho: c.reference_rho,
        stop_tol: c.reference_tol,
        max_iters: 1_000_000,
        parallel_blocks: c.parallel,
        trace_stride: usize::MAX,
        ..SolverConfig::default()
    };
    info!("computing a reference solution with rho {}", c.reference_rho);
    let out = sync::run(problem, &cfg)?;
    if !out.converged {
        log::warn!("reference run stopped after {} iterations without converging", out.iterations);
    }
    Ok(SaddlePoint::from_state(&out.state))
}

fn async_cmd(c: &RunConfig) -> Result<(), CliError> {
    let (problem, mut reference, shape) = match &c.instance {
        Some(_) => {
            let inst = instance(c)?;
            (inst.problem, inst.reference_saddle, json!({"instance": inst.name}))
        }
        None => {
            let data = load_graph(c)?;
            let problem = graph::reformulate(&data.graph, &spec(c, c.omega), c.reform)?;
            let shape = json!({
                "train": data.split.train.len(),
                "vertices": data.graph.vertices.len(),
                "edges": data.graph.edges.len(),
            });
            (problem, None, shape)
        }
    };
    if problem.num_nonlinear() > 0 {
        return Err(npcpm::Error::NonlinearCouplingInAsync(problem.num_nonlinear()).into());
    }
    if !c.reference {
        reference = None;
    } else if reference.is_none() {
        reference = Some(reference_solution(c, &problem)?);
    }
    let delays = c.delays.clone().unwrap_or_else(|| {
        let mut d = DelayModel::vertex_edge(c.seed);
        // built-in instances have unclassed blocks
        if let WorkerCompute::PerClass(m) = &mut d.worker_compute {
            m.insert("default".into(), 1.0);
        }
        d
    });
    let taus = c.tau_sweep.clone().unwrap_or_else(|| c.tau.into_iter().collect());
    let sweep = c.tau_sweep.is_some();
    let delta_lambda = reference.as_ref().map(|r| r.lambda.norm());

    let mut lines = Vec::new();
    let mut runs = Vec::new();
    for &tau in &taus {
        let cfg = AsyncConfig {
            rho: c.rho,
            tau,
            max_iters: c.max_iters,
            stop_tol: c.stop_tol,
            reference_point: reference.clone(),
            track_ergodic: reference.is_some(),
            parallel_workers: c.parallel,
            trace_stride: c.trace_stride,
            ..AsyncConfig::default()
        };
        info!("async run with tau {tau}, rho {}", c.rho);
        let out = asynch::run_simulation(&problem, &delays, &cfg)?;
        let name = if sweep { format!("trace_tau_{tau}.csv") } else { "trace.csv".into() };
        trace::write_trace_file(&c.out.join(name), &out.trace, true)?;
        let ergodic = delta_lambda.map(|d| asynch::ergodic_check(&out.ergodic_samples, d));
        let dist = out.trace.last().and_then(|r| r.dist_to_ref);
        info!(
            "tau {tau}: {} commits, converged {}, simulated {:.1} s",
            out.iterations, out.converged, out.sim_time
        );
        lines.push(format!(
            "{tau},{},{},{:.6},{},{},{}",
            out.iterations,
            out.converged,
            out.sim_time,
            out.max_staleness,
            opt(ergodic.map(|e| e.pass)),
            opt(dist)
        ));
        runs.push(json!({
            "tau": tau,
            "iterations": out.iterations,
            "converged": out.converged,
            "sim_time": out.sim_time,
            "max_staleness": out.max_staleness,
            "rho_bound": out.rho_bound,
            "ergodic": ergodic,
            "dist_to_ref": dist,
            "warnings": out.warnings,
        }));
    }
    if sweep {
        write_table(
            &c.out.join("tau_sweep.csv"),
            "tau,iterations,converged,sim_time,max_staleness,ergodic_pass,dist_to_ref",
            &lines,
        )?;
    }
    write_json(
        &c.out.join("summary.json"),
        &json!({
            "config": c,
            "problem": shape,
            "blocks": problem.num_blocks(),
            "delays": delays,
            "runs": runs,
        }),
    )
}
