use crate::Vector;

/// Errors produced by the solver, the simulator and the data pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in block {block}: expected {expected}, found {found} ({what})")]
    DimensionMismatch {
        block: usize,
        expected: usize,
        found: usize,
        what: &'static str,
    },

    #[error("malformed problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("inner solver hit its cap of {iterations} iterations (residual {residual:e}){}", block.map(|b| format!(" in block {b}")).unwrap_or_default())]
    InnerSolver {
        block: Option<usize>,
        iterations: usize,
        residual: f64,
        best: Vector,
    },

    #[error("matrix is not positive semidefinite: {0}")]
    NotPositiveSemidefinite(String),

    #[error("asynchronous variant only supports linear coupling, problem declares {0} nonlinear rows")]
    NonlinearCouplingInAsync(usize),

    #[error("bounded-delay invariant broken at commit {commit}: worker {worker} has staleness {staleness} with tau {tau}")]
    StalenessViolation {
        commit: usize,
        worker: usize,
        staleness: usize,
        tau: usize,
    },

    #[error("data error at row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("data error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attach a block index to an inner-solver failure.
    pub fn in_block(self, index: usize) -> Self {
        match self {
            Error::InnerSolver {
                iterations,
                residual,
                best,
                ..
            } => Error::InnerSolver {
                block: Some(index),
                iterations,
                residual,
                best,
            },
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
