//! Synchronous N-block PCPM.
//!
//! One iteration is
//!
//! ```text
//! gamma   = lambda + rho (sum_i A_i x_i - b)
//! nu      = [mu + rho sum_i g_i(x_i)]_+
//! x_i'    = argmin_{X_i} f_i + gamma'A_i x_i + nu'g_i + 1/(2 rho)||x_i - x_i||^2
//! lambda' = lambda + rho (sum_i A_i x_i' - b)
//! mu'     = [mu + rho sum_i g_i(x_i')]_+
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::problem::{BlockProblem, Residuals, SaddleState};
use crate::prox::{solve_block_prox, InnerSettings, ProxTask};
use crate::Vector;

/// A known primal-dual solution used for distance tracking.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddlePoint {
    pub x: Vec<Vector>,
    pub lambda: Vector,
    pub mu: Vector,
}

impl SaddlePoint {
    pub fn from_state(state: &SaddleState) -> Self {
        Self {
            x: state.x.clone(),
            lambda: state.lambda.clone(),
            mu: state.mu.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub rho: f64,
    /// Margin of the step-size bound, in (0, 1).
    pub epsilon_margin: f64,
    pub max_iters: usize,
    pub stop_tol: f64,
    #[serde(skip)]
    pub reference_point: Option<SaddlePoint>,
    pub parallel_blocks: bool,
    pub inner: InnerSettings,
    /// Record every `trace_stride`-th iteration; the last one is always kept.
    pub trace_stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            epsilon_margin: 0.1,
            max_iters: 200_000,
            stop_tol: 1e-6,
            reference_point: None,
            parallel_blocks: true,
            inner: InnerSettings::default(),
            trace_stride: 1,
        }
    }
}

impl SolverConfig {
    pub fn with_rho(rho: f64) -> Self {
        Self {
            rho,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rho must be a positive finite number, got {}",
                self.rho
            )));
        }
        if !(self.epsilon_margin > 0.0 && self.epsilon_margin < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon_margin must lie in (0, 1), got {}",
                self.epsilon_margin
            )));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "stop_tol must be nonnegative, got {}",
                self.stop_tol
            )));
        }
        if self.trace_stride == 0 {
            return Err(Error::InvalidConfig("trace_stride must be at least 1".into()));
        }
        if !(self.inner.tol > 0.0) || self.inner.max_iters == 0 {
            return Err(Error::InvalidConfig("inner solver needs tol > 0 and max_iters > 0".into()));
        }
        if !(self.inner.shrink > 0.0 && self.inner.shrink < 1.0) || !(self.inner.grow >= 1.0) {
            return Err(Error::InvalidConfig(
                "inner solver needs shrink in (0, 1) and grow >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Diagnostics of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub lin_residual: f64,
    pub ineq_violation: f64,
    pub step_norm: f64,
    pub pc_gap: f64,
    pub dist_to_ref: Option<f64>,
    pub sim_time: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: SaddleState,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    /// Step-size bound for the problem at the configured margin.
    pub rho_bound: f64,
    pub rho_exceeds_bound: bool,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn last(&self) -> Option<&TraceRow> {
        self.trace.last()
    }
}

pub(crate) fn dual_step(base: &Vector, residual: &Vector, rho: f64) -> Vector {
    base + residual * rho
}

fn dual_step_nonneg(base: &Vector, residual: &Vector, rho: f64) -> Vector {
    dual_step(base, residual, rho).map(|v| v.max(0.0))
}

fn check_state(state: &SaddleState, problem: &BlockProblem) -> Result<()> {
    problem.check_point(&state.x)?;
    let m = problem.num_linear();
    let big_m = problem.num_nonlinear();
    for (v, len, what) in [
        (&state.lambda, m, "lambda"),
        (&state.gamma, m, "gamma"),
        (&state.mu, big_m, "mu"),
        (&state.nu, big_m, "nu"),
    ] {
        if v.len() != len {
            return Err(Error::DimensionMismatch {
                block: 0,
                expected: len,
                found: v.len(),
                what,
            });
        }
    }
    Ok(())
}

/// Predictor pair `(gamma, nu)` at the current primal iterate.
pub fn predictor_update(
    state: &SaddleState,
    problem: &BlockProblem,
    rho: f64,
) -> Result<(Vector, Vector)> {
    check_state(state, problem)?;
    let r = problem.coupling_residuals(&state.x)?;
    Ok(predict_from(state, &r, rho))
}

fn predict_from(state: &SaddleState, r: &Residuals, rho: f64) -> (Vector, Vector) {
    (
        dual_step(&state.lambda, &r.linear, rho),
        dual_step_nonneg(&state.mu, &r.nonlinear, rho),
    )
}

/// Solves every block subproblem at prices `(gamma, nu)` around `x`.
pub fn primal_step(
    x: &[Vector],
    problem: &BlockProblem,
    gamma: &Vector,
    nu: &Vector,
    rho: f64,
    inner: &InnerSettings,
    parallel: bool,
) -> Result<Vec<Vector>> {
    problem.check_point(x)?;
    par::try_map_indexed(problem.num_blocks(), parallel, |i| {
        let task = ProxTask {
            block_index: i,
            base_point: &x[i],
            rho,
            linear_price: gamma,
            nonlinear_price: nu,
            settings: inner,
        };
        solve_block_prox(&task, problem)
    })
}

/// Corrector pair `(lambda, mu)` at the new primal iterate.
pub fn corrector_update(
    state: &SaddleState,
    problem: &BlockProblem,
    new_x: &[Vector],
    rho: f64,
) -> Result<(Vector, Vector)> {
    check_state(state, problem)?;
    let r = problem.coupling_residuals(new_x)?;
    Ok(predict_from(state, &r, rho))
}

/// Largest step size covered by the synchronous convergence theorem.
///
/// Terms whose denominator vanishes are skipped; `+inf` when all are.
pub fn step_size_bound(epsilon: f64, n: usize, m: usize, a_max: f64, l_max: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one block".into()));
    }
    if !(a_max >= 0.0 && l_max >= 0.0) {
        return Err(Error::InvalidConfig("A_max and L_max must be nonnegative".into()));
    }
    let num = 1.0 - epsilon;
    let denominators = [
        a_max + m as f64 * l_max,
        n as f64 * a_max,
        n as f64 * l_max,
    ];
    Ok(denominators
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|d| num / d)
        .fold(f64::INFINITY, f64::min))
}

/// Bound for a concrete problem.
pub fn problem_step_size_bound(problem: &BlockProblem, epsilon: f64) -> Result<f64> {
    step_size_bound(
        epsilon,
        problem.num_blocks(),
        problem.num_nonlinear(),
        problem.a_max(),
        problem.l_max(),
    )
}

/// `sum_i ||x_i - x_i*||^2 + ||lambda - lambda*||^2 + ||mu - mu*||^2`.
pub fn saddle_distance(state: &SaddleState, reference: &SaddlePoint) -> Result<f64> {
    if state.x.len() != reference.x.len() {
        return Err(Error::DimensionMismatch {
            block: 0,
            expected: reference.x.len(),
            found: state.x.len(),
            what: "number of blocks",
        });
    }
    let mut total = 0.0;
    for (i, (x, r)) in state.x.iter().zip(&reference.x).enumerate() {
        if x.len() != r.len() {
            return Err(Error::DimensionMismatch {
                block: i,
                expected: r.len(),
                found: x.len(),
                what: "reference block",
            });
        }
        total += (x - r).norm_squared();
    }
    if state.lambda.len() != reference.lambda.len() || state.mu.len() != reference.mu.len() {
        return Err(Error::DimensionMismatch {
            block: 0,
            expected: reference.lambda.len() + reference.mu.len(),
            found: state.lambda.len() + state.mu.len(),
            what: "reference multipliers",
        });
    }
    total += (&state.lambda - &reference.lambda).norm_squared();
    total += (&state.mu - &reference.mu).norm_squared();
    Ok(total)
}

/// Stepwise driver. Exposes the state between iterations for instrumentation.
#[derive(Debug)]
pub struct Pcpm<'p> {
    problem: &'p BlockProblem,
    config: SolverConfig,
    state: SaddleState,
    residual: Residuals,
    iter: usize,
}

impl<'p> Pcpm<'p> {
    pub fn new(problem: &'p BlockProblem, config: SolverConfig, state: SaddleState) -> Result<Self> {
        config.validate()?;
        check_state(&state, problem)?;
        if let Some(r) = &config.reference_point {
            saddle_distance(&state, r)?;
        }
        let residual = problem.coupling_residuals(&state.x)?;
        Ok(Self {
            problem,
            config,
            state,
            residual,
            iter: 0,
        })
    }

    pub fn state(&self) -> &SaddleState {
        &self.state
    }

    pub fn into_state(self) -> SaddleState {
        self.state
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    pub fn iteration(&self) -> usize {
        self.iter
    }

    /// Residuals at the current primal iterate.
    pub fn residual(&self) -> &Residuals {
        &self.residual
    }

    /// Performs one predictor / primal / corrector sweep.
    pub fn step(&mut self) -> Result<TraceRow> {
        let rho = self.config.rho;
        let (gamma, nu) = predict_from(&self.state, &self.residual, rho);
        let new_x = primal_step(
            &self.state.x,
            self.problem,
            &gamma,
            &nu,
            rho,
            &self.config.inner,
            self.config.parallel_blocks,
        )?;
        let r = self.problem.coupling_residuals(&new_x)?;
        let (lambda, mu) = predict_from(&self.state, &r, rho);

        let step_norm: f64 = new_x
            .iter()
            .zip(&self.state.x)
            .map(|(a, b)| (a - b).norm())
            .sum();
        let pc_gap = (&gamma - &lambda).norm() + (&nu - &mu).norm();
        let (lin_residual, ineq_violation) = r.violation_norms();

        self.state = SaddleState {
            x: new_x,
            lambda,
            mu,
            gamma,
            nu,
        };
        self.residual = r;
        self.iter += 1;

        let dist_to_ref = match &self.config.reference_point {
            Some(p) => Some(saddle_distance(&self.state, p)?),
            None => None,
        };
        Ok(TraceRow {
            iter: self.iter,
            objective: self.problem.evaluate_objective(&self.state.x)?,
            lin_residual,
            ineq_violation,
            step_norm,
            pc_gap,
            dist_to_ref,
            sim_time: None,
        })
    }
}

/// Whether a row meets the combined stopping test.
pub fn meets_stop_tol(row: &TraceRow, stop_tol: f64) -> bool {
    row.step_norm + row.pc_gap + row.lin_residual + row.ineq_violation < stop_tol
}

/// Runs from the projection of the origin with zero multipliers.
pub fn run(problem: &BlockProblem, config: &SolverConfig) -> Result<RunOutcome> {
    run_from(problem, config, SaddleState::zeros(problem))
}

pub fn run_from(
    problem: &BlockProblem,
    config: &SolverConfig,
    initial: SaddleState,
) -> Result<RunOutcome> {
    let mut solver = Pcpm::new(problem, config.clone(), initial)?;
    let rho_bound = problem_step_size_bound(problem, config.epsilon_margin)?;
    let mut warnings = Vec::new();
    let rho_exceeds_bound = config.rho > rho_bound;
    if rho_exceeds_bound {
        let msg = format!(
            "rho = {} exceeds the convergence bound {:e} (epsilon = {})",
            config.rho, rho_bound, config.epsilon_margin
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let mut trace = Vec::new();
    let mut converged = false;
    while solver.iteration() < config.max_iters {
        let row = solver.step()?;
        converged = meets_stop_tol(&row, config.stop_tol);
        let last = converged || solver.iteration() == config.max_iters;
        if last || row.iter % config.trace_stride == 0 {
            trace.push(row);
        }
        if row.iter % 10_000 == 0 {
            log::info!(
                "iter {} objective {:.6} lin {:.3e} ineq {:.3e}",
                row.iter,
                row.objective,
                row.lin_residual,
                row.ineq_violation
            );
        }
        if converged {
            break;
        }
    }
    if !converged {
        let msg = format!("stopped at max_iters = {} before reaching stop_tol", config.max_iters);
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let iterations = solver.iteration();
    Ok(RunOutcome {
        state: solver.into_state(),
        trace,
        iterations,
        converged,
        rho_bound,
        rho_exceeds_bound,
        warnings,
    })
}
