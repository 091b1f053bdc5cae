//! Distributed solution of block-separable convex programs with the N-block
//! predictor-corrector proximal multiplier (PCPM) method.
//!
//! * [`problem`]: program representation and evaluators
//! * [`prox`]: per-block proximal subproblem solvers
//! * [`sync`]: the synchronous N-block iteration with tracing
//! * [`asynchronous`]: discrete-event simulation of the bounded-delay main/worker variant
//! * [`graph`]: network-regularised spatial regression and its reformulations
//! * [`bench`]: built-in benchmark instances
//! * [`trace`]: CSV trace output and rate diagnostics

pub mod asynchronous;
pub mod bench;
pub mod error;
pub mod graph;
pub mod par;
pub mod problem;
pub mod prox;
pub mod sync;
pub mod trace;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use error::{Error, Result};
pub use problem::{Block, BlockProblem, SaddleState};
pub use sync::{SolverConfig, TraceRow};
