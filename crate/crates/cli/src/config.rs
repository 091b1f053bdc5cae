//! Run configuration: defaults, then the JSON config file, then flags.

use std::path::{Path, PathBuf};

use npcpm::asynchronous::DelayModel;
use npcpm::graph::{EdgeWeight, Reformulation};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Graph,
    Async,
    Sweep,
}

/// Fully resolved configuration, echoed into every summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub instance: Option<String>,
    pub data: Option<PathBuf>,
    pub synthetic: bool,
    pub synthetic_count: usize,
    pub test_count: usize,
    pub reform: Reformulation,
    pub omega: f64,
    pub reg_mu: f64,
    pub neighbor_radius: f64,
    pub min_neighbors: usize,
    pub edge_weight: EdgeWeight,
    pub zero_is_missing: bool,
    pub rho: f64,
    pub epsilon_margin: f64,
    pub tau: Option<usize>,
    pub tau_sweep: Option<Vec<usize>>,
    pub delays: Option<DelayModel>,
    pub sweep_omega: Option<Vec<f64>>,
    pub rhos: Option<Vec<f64>>,
    pub seed: u64,
    pub max_iters: usize,
    pub stop_tol: f64,
    pub trace_stride: usize,
    pub parallel: bool,
    pub reference: bool,
    pub reference_rho: f64,
    pub reference_tol: f64,
    pub out: PathBuf,
}

pub const OMEGA_GRID: [f64; 6] = [1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];

fn defaults(command: Command) -> Value {
    let (rho, max_iters) = match command {
        Command::Solve | Command::Sweep => (Value::Null, 200_000),
        Command::Graph => (0.06.into(), 200_000),
        Command::Async => (0.0005.into(), 10_000),
    };
    serde_json::json!({
        "command": command,
        "instance": null,
        "data": null,
        "synthetic": false,
        "synthetic_count": 985,
        "test_count": 193,
        "reform": "slack",
        "omega": 1.0,
        "reg_mu": 0.1,
        "neighbor_radius": 1.0,
        "min_neighbors": 5,
        "edge_weight": "inverse-linear",
        "zero_is_missing": true,
        "rho": rho,
        "epsilon_margin": 0.1,
        "tau": if command == Command::Async { Value::from(4) } else { Value::Null },
        "tau_sweep": null,
        "delays": null,
        "sweep_omega": null,
        "rhos": null,
        "seed": 0,
        "max_iters": max_iters,
        "stop_tol": 1e-6,
        "trace_stride": 1,
        "parallel": true,
        "reference": true,
        "reference_rho": 0.05,
        "reference_tol": 1e-10,
        "out": "out",
    })
}

/// Keys that only make sense for some commands.
fn foreign_keys(command: Command) -> &'static [&'static str] {
    match command {
        Command::Solve => &["tau", "tau_sweep", "delays", "sweep_omega", "rhos", "data", "synthetic"],
        Command::Sweep => &["tau", "tau_sweep", "delays", "sweep_omega", "data", "synthetic"],
        Command::Graph => &["tau", "tau_sweep", "delays", "rhos", "instance"],
        Command::Async => &["sweep_omega", "rhos"],
    }
}

pub fn read_file(path: &Path) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Validation(format!("config {} must be a JSON object", path.display()))),
        Err(e) => Err(CliError::Validation(format!("config {}: {e}", path.display()))),
    }
}

/// Merges the layers and validates the result.
pub fn resolve(
    command: Command,
    file: Map<String, Value>,
    flags: Map<String, Value>,
) -> Result<RunConfig, CliError> {
    if let Some(c) = file.get("command") {
        if c != &serde_json::to_value(command).expect("command serializes") {
            return Err(CliError::Validation(format!(
                "config file is for command {c}, not {}",
                serde_json::to_value(command).expect("command serializes")
            )));
        }
    }
    for key in foreign_keys(command) {
        let set = |m: &Map<String, Value>| m.get(*key).is_some_and(|v| !v.is_null() && v != &Value::Bool(false));
        if set(&file) || set(&flags) {
            return Err(CliError::Validation(format!(
                "'{key}' does not apply to the {} command",
                serde_json::to_value(command).expect("command serializes")
            )));
        }
    }
    let Value::Object(mut merged) = defaults(command) else {
        unreachable!("defaults are an object")
    };
    merged.extend(file);
    merged.extend(flags);
    if command == Command::Solve || command == Command::Sweep {
        let name = merged
            .get("instance")
            .and_then(Value::as_str)
            .ok_or_else(|| CliError::Validation("an instance name is required".into()))?;
        let inst = npcpm::bench::instance_by_name(name).ok_or_else(|| {
            CliError::Validation(format!(
                "unknown instance '{name}'; known: {}",
                npcpm::bench::instance_names().join(", ")
            ))
        })?;
        if merged["rho"].is_null() {
            merged.insert("rho".into(), inst.recommended_rho.into());
        }
    }
    let config: RunConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Validation(format!("bad configuration: {e}")))?;
    validate(&config)?;
    Ok(config)
}

fn validate(c: &RunConfig) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::Validation(msg));
    let positive = |v: f64| v > 0.0 && v.is_finite();
    if !positive(c.rho) {
        return bad(format!("rho must be a positive finite number, got {}", c.rho));
    }
    if !(c.epsilon_margin > 0.0 && c.epsilon_margin < 1.0) {
        return bad(format!("epsilon_margin must lie in (0, 1), got {}", c.epsilon_margin));
    }
    if !(c.stop_tol >= 0.0) || c.max_iters == 0 || c.trace_stride == 0 {
        return bad("stop_tol must be nonnegative, max_iters and trace_stride positive".into());
    }
    if !(c.omega >= 0.0 && c.omega.is_finite()) || !(c.reg_mu >= 0.0 && c.reg_mu.is_finite()) {
        return bad("omega and reg_mu must be finite and nonnegative".into());
    }
    if !positive(c.neighbor_radius) {
        return bad(format!("neighbor_radius must be positive, got {}", c.neighbor_radius));
    }
    if !positive(c.reference_rho) || !(c.reference_tol > 0.0) {
        return bad("reference_rho and reference_tol must be positive".into());
    }
    match c.command {
        Command::Graph | Command::Async if c.instance.is_none() => {
            if c.data.is_some() == c.synthetic {
                return bad("give exactly one of --data PATH and --synthetic".into());
            }
            if c.synthetic && c.test_count >= c.synthetic_count {
                return bad("test_count must be below synthetic_count".into());
            }
        }
        Command::Async if c.data.is_some() || c.synthetic => {
            return bad("give either --instance or a data source, not both".into());
        }
        _ => {}
    }
    if c.command == Command::Async {
        if c.reform == Reformulation::Copy && c.instance.is_none() {
            return bad(
                "the copy reformulation has edge blocks that are not strongly convex, which the \
                 asynchronous method needs; use --reform slack"
                    .into(),
            );
        }
        let taus: Vec<usize> = match (&c.tau_sweep, c.tau) {
            (Some(s), _) => s.clone(),
            (None, Some(t)) => vec![t],
            (None, None) => return bad("tau is required".into()),
        };
        if taus.is_empty() || taus.contains(&0) {
            return bad("every tau must be at least 1".into());
        }
        if let Some(d) = &c.delays {
            d.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        }
    }
    if let Some(ws) = &c.sweep_omega {
        if ws.is_empty() || ws.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return bad("sweep_omega needs nonnegative finite values".into());
        }
    }
    if c.command == Command::Sweep {
        match &c.rhos {
            Some(r) if !r.is_empty() && r.iter().all(|v| positive(*v)) => {}
            _ => return bad("sweep needs --rhos with positive values".into()),
        }
    }
    Ok(())
}
