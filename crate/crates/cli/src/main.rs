mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use config::Command;

#[derive(Debug)]
pub enum CliError {
    /// Bad input; exit 1.
    Validation(String),
    /// Failure while running; exit 2.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<npcpm::Error> for CliError {
    fn from(e: npcpm::Error) -> Self {
        match e {
            npcpm::Error::InvalidConfig(_) | npcpm::Error::NonlinearCouplingInAsync(_) => {
                CliError::Validation(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "npcpm", version, about = "N-block PCPM solver, graph regression and asynchronous simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve a built-in instance with the synchronous method.
    Solve {
        instance: Option<String>,
        /// Print the instance names and exit.
        #[arg(long)]
        list: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Network-regularised regression on housing data or a synthetic stand-in.
    Graph {
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated omega values; omit the value for the default grid.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        sweep_omega: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Asynchronous bounded-delay simulation.
    Async {
        /// Built-in instance instead of graph data.
        #[arg(long)]
        instance: Option<String>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        tau: Option<usize>,
        /// Comma-separated list, e.g. 1,2,4,7.
        #[arg(long, value_delimiter = ',')]
        tau_sweep: Option<Vec<usize>>,
        /// JSON delay model file.
        #[arg(long)]
        delays: Option<PathBuf>,
        /// Skip computing a reference solution (no distance or ergodic columns).
        #[arg(long)]
        no_reference: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Synchronous runs of one instance over several step sizes.
    Sweep {
        instance: String,
        #[arg(long, value_delimiter = ',', required = true)]
        rhos: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long, allow_negative_numbers = true)]
    rho: Option<f64>,
    #[arg(long)]
    epsilon_margin: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    stop_tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Keep every n-th trace row.
    #[arg(long)]
    trace_stride: Option<usize>,
    /// Solve blocks sequentially.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Housing CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use seeded synthetic data instead of a CSV.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    synthetic_count: Option<usize>,
    #[arg(long)]
    test_count: Option<usize>,
    /// copy or slack.
    #[arg(long)]
    reform: Option<String>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    reg_mu: Option<f64>,
    /// Miles.
    #[arg(long)]
    neighbor_radius: Option<f64>,
    #[arg(long)]
    min_neighbors: Option<usize>,
    /// inverse-linear or constant.
    #[arg(long)]
    edge_weight: Option<String>,
    /// Keep literal zeros in feature columns instead of treating them as missing.
    #[arg(long)]
    keep_zeros: bool,
}

fn put(m: &mut Map<String, Value>, key: &str, v: Option<impl Into<Value>>) {
    if let Some(v) = v {
        m.insert(key.to_string(), v.into());
    }
}

fn path_value(p: Option<PathBuf>) -> Option<Value> {
    p.map(|p| Value::String(p.to_string_lossy().into_owned()))
}

impl Common {
    fn into_flags(self, m: &mut Map<String, Value>) -> Option<PathBuf> {
        put(m, "rho", self.rho);
        put(m, "epsilon_margin", self.epsilon_margin);
        put(m, "max_iters", self.max_iters);
        put(m, "stop_tol", self.stop_tol);
        put(m, "seed", self.seed);
        put(m, "out", path_value(self.out));
        put(m, "trace_stride", self.trace_stride);
        if self.sequential {
            m.insert("parallel".into(), false.into());
        }
        self.config
    }
}

impl DataArgs {
    fn into_flags(self, m: &mut Map<String, Value>) {
        put(m, "data", path_value(self.data));
        if self.synthetic {
            m.insert("synthetic".into(), true.into());
        }
        put(m, "synthetic_count", self.synthetic_count);
        put(m, "test_count", self.test_count);
        put(m, "reform", self.reform.map(|r| r.to_ascii_lowercase()));
        put(m, "omega", self.omega);
        put(m, "reg_mu", self.reg_mu);
        put(m, "neighbor_radius", self.neighbor_radius);
        put(m, "min_neighbors", self.min_neighbors);
        put(m, "edge_weight", self.edge_weight);
        if self.keep_zeros {
            m.insert("zero_is_missing".into(), false.into());
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut flags = Map::new();
    let (command, config_path) = match cli.command {
        Cmd::Solve { instance, list, common } => {
            if list {
                for name in npcpm::bench::instance_names() {
                    println!("{name}");
                }
                return Ok(());
            }
            put(&mut flags, "instance", instance);
            (Command::Solve, common.into_flags(&mut flags))
        }
        Cmd::Graph { data, sweep_omega, common } => {
            data.into_flags(&mut flags);
            if let Some(ws) = sweep_omega {
                let ws = if ws.is_empty() { config::OMEGA_GRID.to_vec() } else { ws };
                flags.insert("sweep_omega".into(), serde_json::json!(ws));
            }
            (Command::Graph, common.into_flags(&mut flags))
        }
        Cmd::Async {
            instance,
            data,
            tau,
            tau_sweep,
            delays,
            no_reference,
            common,
        } => {
            put(&mut flags, "instance", instance);
            data.into_flags(&mut flags);
            put(&mut flags, "tau", tau);
            put(&mut flags, "tau_sweep", tau_sweep.map(|t| serde_json::json!(t)));
            if let Some(path) = delays {
                let text = std::fs::read_to_string(&path).map_err(|e| {
                    CliError::Validation(format!("cannot read delays {}: {e}", path.display()))
                })?;
                let v: Value = serde_json::from_str(&text)
                    .map_err(|e| CliError::Validation(format!("delays {}: {e}", path.display())))?;
                flags.insert("delays".into(), v);
            }
            if no_reference {
                flags.insert("reference".into(), false.into());
            }
            (Command::Async, common.into_flags(&mut flags))
        }
        Cmd::Sweep { instance, rhos, common } => {
            flags.insert("instance".into(), instance.into());
            flags.insert("rhos".into(), serde_json::json!(rhos));
            (Command::Sweep, common.into_flags(&mut flags))
        }
    };
    let file = match config_path {
        Some(p) => config::read_file(&p)?,
        None => Map::new(),
    };
    let resolved = config::resolve(command, file, flags)?;
    commands::execute(&resolved)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Validation(_) => 1,
                CliError::Runtime(_) => 2,
            })
        }
    }
}
