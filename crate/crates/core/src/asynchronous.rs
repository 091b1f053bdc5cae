//! Discrete-event simulation of asynchronous N-block PCPM with bounded delay.
//!
//! Programs must have linear coupling only. The main processor keeps
//! `(x, lambda)`; worker `i` owns block `i`. A commit takes the results that
//! have arrived (the set `A_k`), replaces those blocks, updates
//!
//! ```text
//! lambda' = lambda + rho (sum_i A_i x_i - b)
//! price   = lambda' + rho (sum_i A_i x_i - b)
//! ```
//!
//! and sends `price` to the workers in `A_k` only. A commit is allowed when
//! every worker outside `A_k` stays below `tau` missed commits.
//!
//! Virtual time: a task dispatched at `t` reaches the main processor at
//! `t + worker_compute + U(comm_low, comm_high)`, and each commit keeps the
//! main processor busy for `main_compute` seconds. Ties are broken by worker id.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::problem::{Block, BlockProblem, SaddleState};
use crate::prox::{solve_block_prox, InnerSettings, ProxTask};
use crate::sync::{dual_step, meets_stop_tol, saddle_distance, SaddlePoint, TraceRow};
use crate::Vector;

/// Worker compute time, either one value or a map keyed by block class.
///
/// The class of a block is its name up to the first `:`; the key `default`
/// catches classes that are not listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WorkerCompute {
    Uniform(f64),
    PerClass(BTreeMap<String, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub main_compute: f64,
    pub worker_compute: WorkerCompute,
    pub comm_low: f64,
    pub comm_high: f64,
    pub seed: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self::vertex_edge(0)
    }
}

/// Class of a block for delay lookup.
pub fn block_class(block: &Block) -> &str {
    block
        .name
        .as_deref()
        .map(|n| n.split(':').next().unwrap_or(n))
        .unwrap_or("")
}

impl DelayModel {
    /// Main 1.0 s, vertex workers 1.2 s, edge workers 0.6 s, communication U(0, 1) s.
    pub fn vertex_edge(seed: u64) -> Self {
        let mut classes = BTreeMap::new();
        classes.insert("vertex".to_string(), 1.2);
        classes.insert("edge".to_string(), 0.6);
        Self {
            main_compute: 1.0,
            worker_compute: WorkerCompute::PerClass(classes),
            comm_low: 0.0,
            comm_high: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v >= 0.0 && v.is_finite();
        let workers_ok = match &self.worker_compute {
            WorkerCompute::Uniform(v) => ok(*v),
            WorkerCompute::PerClass(m) => m.values().all(|&v| ok(v)),
        };
        if !ok(self.main_compute) || !workers_ok || !ok(self.comm_low) || !ok(self.comm_high) {
            return Err(Error::InvalidConfig("all delays must be finite and nonnegative".into()));
        }
        if self.comm_high < self.comm_low {
            return Err(Error::InvalidConfig(format!(
                "comm_high {} is below comm_low {}",
                self.comm_high, self.comm_low
            )));
        }
        Ok(())
    }

    pub fn compute_time(&self, block: &Block) -> Result<f64> {
        match &self.worker_compute {
            WorkerCompute::Uniform(v) => Ok(*v),
            WorkerCompute::PerClass(m) => {
                let class = block_class(block);
                m.get(class).or_else(|| m.get("default")).copied().ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "no worker_compute entry for block class '{class}' and no 'default'"
                    ))
                })
            }
        }
    }

    fn sample_comm<R: Rng>(&self, rng: &mut R) -> f64 {
        if self.comm_high > self.comm_low {
            rng.random_range(self.comm_low..self.comm_high)
        } else {
            self.comm_low
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InFlight {
    pub arrival_time: f64,
    pub x: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkerSlot {
    pub worker_id: usize,
    /// Commits since this worker was last serviced.
    pub staleness: usize,
    /// The worker's copy of its block, the base point of its next task.
    pub last_sent_x: Vector,
    pub in_flight: Option<InFlight>,
    /// Commit at which the worker was last serviced; -1 is the initial gather.
    pub last_serviced: i64,
}

/// Running sums of the committed primal iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct ErgodicAccumulator {
    pub sums: Vec<Vector>,
    pub count: usize,
}

impl ErgodicAccumulator {
    pub fn new(problem: &BlockProblem) -> Self {
        Self {
            sums: problem.blocks().iter().map(|b| Vector::zeros(b.dim())).collect(),
            count: 0,
        }
    }

    pub fn add(&mut self, x: &[Vector]) {
        for (s, xi) in self.sums.iter_mut().zip(x) {
            *s += xi;
        }
        self.count += 1;
    }

    pub fn average(&self) -> Vec<Vector> {
        let k = self.count.max(1) as f64;
        self.sums.iter().map(|s| s / k).collect()
    }
}

/// Ergodic quantities after commit `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicSample {
    pub k: usize,
    /// `|f(xbar^k) - f*|`
    pub objective_gap: f64,
    /// `||sum_i A_i xbar_i^k - b||`
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Arrival {
        time: f64,
        worker: usize,
    },
    Commit {
        index: usize,
        start: f64,
        end: f64,
        arrivals: Vec<usize>,
        lambda_before: Vector,
        lambda_after: Vector,
    },
    /// `commit` is `None` for the initial broadcast.
    Dispatch {
        time: f64,
        worker: usize,
        commit: Option<usize>,
        price: Vector,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AsyncConfig {
    pub rho: f64,
    pub tau: usize,
    pub max_iters: usize,
    pub stop_tol: f64,
    /// Fewest arrivals the main processor commits with.
    pub min_arrivals: usize,
    pub inner: InnerSettings,
    #[serde(skip)]
    pub reference_point: Option<SaddlePoint>,
    /// Track `xbar^k` against the reference (needs `reference_point`).
    pub track_ergodic: bool,
    pub record_events: bool,
    pub parallel_workers: bool,
    pub trace_stride: usize,
    /// Use the bound with `A_max` instead of `A_max^2` in the warning check.
    pub unsquared_bound: bool,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        Self {
            rho: 0.1,
            tau: 1,
            max_iters: 10_000,
            stop_tol: 1e-6,
            min_arrivals: 1,
            inner: InnerSettings::default(),
            reference_point: None,
            track_ergodic: false,
            record_events: false,
            parallel_workers: true,
            trace_stride: 1,
            unsquared_bound: false,
        }
    }
}

impl AsyncConfig {
    pub fn validate(&self, num_workers: usize) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rho must be a positive finite number, got {}",
                self.rho
            )));
        }
        if self.tau == 0 {
            return Err(Error::InvalidConfig("tau must be at least 1".into()));
        }
        if self.min_arrivals == 0 || self.min_arrivals > num_workers {
            return Err(Error::InvalidConfig(format!(
                "min_arrivals must lie in [1, {num_workers}], got {}",
                self.min_arrivals
            )));
        }
        if !(self.stop_tol >= 0.0) || self.trace_stride == 0 {
            return Err(Error::InvalidConfig(
                "stop_tol must be nonnegative and trace_stride positive".into(),
            ));
        }
        if self.track_ergodic && self.reference_point.is_none() {
            return Err(Error::InvalidConfig(
                "ergodic tracking needs a reference point".into(),
            ));
        }
        Ok(())
    }
}

/// Largest step size covered by the asynchronous convergence theorem:
/// `sigma_min / (25 N (tau - 1)^2 A_max^2)`, or with `A_max` unsquared.
pub fn async_step_size_bound(
    sigma_min: f64,
    n: usize,
    tau: usize,
    a_max: f64,
    unsquared: bool,
) -> Result<f64> {
    if !(sigma_min > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma_min must be positive, got {sigma_min}"
        )));
    }
    if n == 0 || tau == 0 {
        return Err(Error::InvalidConfig("need N >= 1 and tau >= 1".into()));
    }
    if tau == 1 {
        return Ok(f64::INFINITY);
    }
    let a = if unsquared { a_max } else { a_max * a_max };
    let d = 25.0 * n as f64 * ((tau - 1) as f64).powi(2) * a;
    Ok(if d > 0.0 { sigma_min / d } else { f64::INFINITY })
}

pub fn problem_async_step_size_bound(problem: &BlockProblem, tau: usize, unsquared: bool) -> Result<f64> {
    async_step_size_bound(
        problem.sigma_min(),
        problem.num_blocks(),
        tau,
        problem.a_max(),
        unsquared,
    )
}

/// Block subproblem a worker solves at price `gamma_hat` around `x_hat`.
pub fn worker_step(
    worker_id: usize,
    gamma_hat: &Vector,
    x_hat: &Vector,
    problem: &BlockProblem,
    rho: f64,
    inner: &InnerSettings,
) -> Result<Vector> {
    let nu = Vector::zeros(problem.num_nonlinear());
    solve_block_prox(
        &ProxTask {
            block_index: worker_id,
            base_point: x_hat,
            rho,
            linear_price: gamma_hat,
            nonlinear_price: &nu,
            settings: inner,
        },
        problem,
    )
}

/// Whether committing with `arrivals` keeps every other worker below `tau`.
pub fn gate_allows(slots: &[WorkerSlot], arrivals: &BTreeSet<usize>, tau: usize) -> bool {
    slots
        .iter()
        .all(|s| arrivals.contains(&s.worker_id) || s.staleness + 1 < tau)
}

/// Result of one commit.
#[derive(Debug, Clone, PartialEq)]
pub struct Commit {
    pub lambda_before: Vector,
    /// Price broadcast to the serviced workers.
    pub price: Vector,
    pub step_norm: f64,
    pub lin_residual: f64,
}

/// One main-processor commit. `arrivals` holds `(worker, x_hat)` pairs in
/// increasing worker order. Fails hard if the delay gate does not hold.
pub fn main_step(
    slots: &mut [WorkerSlot],
    state: &mut SaddleState,
    arrivals: &[(usize, Vector)],
    problem: &BlockProblem,
    rho: f64,
    tau: usize,
    commit_index: usize,
) -> Result<Commit> {
    let set: BTreeSet<usize> = arrivals.iter().map(|(i, _)| *i).collect();
    if let Some(s) = slots
        .iter()
        .find(|s| !set.contains(&s.worker_id) && s.staleness + 1 >= tau)
    {
        return Err(Error::StalenessViolation {
            commit: commit_index,
            worker: s.worker_id,
            staleness: s.staleness + 1,
            tau,
        });
    }
    let mut step_norm = 0.0;
    for (i, x) in arrivals {
        step_norm += (x - &state.x[*i]).norm();
        state.x[*i] = x.clone();
    }
    for s in slots.iter_mut() {
        if set.contains(&s.worker_id) {
            s.staleness = 0;
            s.last_serviced = commit_index as i64;
        } else {
            s.staleness += 1;
        }
    }
    let r = problem.coupling_residuals(&state.x)?;
    let lambda_before = state.lambda.clone();
    state.lambda = dual_step(&lambda_before, &r.linear, rho);
    let price = dual_step(&state.lambda, &r.linear, rho);
    Ok(Commit {
        lambda_before,
        price,
        step_norm,
        lin_residual: r.linear.norm(),
    })
}

/// Time-ordered key with worker-id tiebreak, smallest first in a max-heap.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Due(f64, usize);

impl Eq for Due {}

impl Ord for Due {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .total_cmp(&self.0)
            .then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Due {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
pub struct AsyncOutcome {
    pub state: SaddleState,
    pub slots: Vec<WorkerSlot>,
    pub trace: Vec<TraceRow>,
    pub iterations: usize,
    pub converged: bool,
    pub sim_time: f64,
    pub ergodic: ErgodicAccumulator,
    pub ergodic_samples: Vec<ErgodicSample>,
    pub events: Vec<SimEvent>,
    /// Largest staleness of a non-arriving worker seen at any commit.
    pub max_staleness: usize,
    pub rho_bound: f64,
    pub warnings: Vec<String>,
}

fn check_bounded_delay(slots: &[WorkerSlot], commit: usize, tau: usize) -> Result<()> {
    for s in slots {
        let since = commit as i64 - s.last_serviced;
        if s.staleness >= tau || since as usize != s.staleness || since > tau as i64 - 1 {
            return Err(Error::StalenessViolation {
                commit,
                worker: s.worker_id,
                staleness: s.staleness.max(since.max(0) as usize),
                tau,
            });
        }
    }
    Ok(())
}

/// Runs the simulation from the projection of the origin with zero multipliers.
pub fn run_simulation(
    problem: &BlockProblem,
    delays: &DelayModel,
    config: &AsyncConfig,
) -> Result<AsyncOutcome> {
    if problem.num_nonlinear() > 0 {
        return Err(Error::NonlinearCouplingInAsync(problem.num_nonlinear()));
    }
    let n = problem.num_blocks();
    config.validate(n)?;
    delays.validate()?;
    let compute: Vec<f64> = problem
        .blocks()
        .iter()
        .map(|b| delays.compute_time(b))
        .collect::<Result<_>>()?;

    let mut warnings = Vec::new();
    let sigma_min = problem.sigma_min();
    let rho_bound = if sigma_min > 0.0 {
        problem_async_step_size_bound(problem, config.tau, config.unsquared_bound)?
    } else {
        let msg = "some block declares no strong convexity; convergence is not guaranteed".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
        f64::NAN
    };
    if config.rho > rho_bound {
        let msg = format!(
            "rho = {} exceeds the asynchronous bound {:e} at tau = {}",
            config.rho, rho_bound, config.tau
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let rho = config.rho;
    let tau = config.tau;
    let mut rng = ChaCha8Rng::seed_from_u64(delays.seed);
    let mut state = SaddleState::zeros(problem);
    if let Some(r) = &config.reference_point {
        saddle_distance(&state, r)?;
    }
    let mut slots: Vec<WorkerSlot> = (0..n)
        .map(|i| WorkerSlot {
            worker_id: i,
            staleness: 0,
            last_sent_x: state.x[i].clone(),
            in_flight: None,
            last_serviced: -1,
        })
        .collect();
    let mut events = Vec::new();
    let mut queue = BinaryHeap::new();

    // initial gather of x^0, then the first broadcast to everybody
    let mut gather_done = 0.0f64;
    for slot in &slots {
        let t = delays.sample_comm(&mut rng);
        gather_done = gather_done.max(t);
        if config.record_events {
            events.push(SimEvent::Arrival {
                time: t,
                worker: slot.worker_id,
            });
        }
    }
    let r0 = problem.coupling_residuals(&state.x)?;
    let mut price = dual_step(&state.lambda, &r0.linear, rho);
    state.gamma = price.clone();
    let mut now = gather_done + delays.main_compute;
    let everyone: Vec<usize> = (0..n).collect();
    dispatch(
        &everyone, &mut slots, &price, problem, config, delays, &compute, &mut rng, now, None,
        &mut queue, &mut events,
    )?;

    let mut ready: BTreeSet<usize> = BTreeSet::new();
    let mut ergodic = ErgodicAccumulator::new(problem);
    let mut ergodic_samples = Vec::new();
    let f_star = match &config.reference_point {
        Some(r) if config.track_ergodic => Some(problem.evaluate_objective(&r.x)?),
        _ => None,
    };
    let mut trace = Vec::new();
    let mut converged = false;
    // Commits in a row meeting the stop test. Any tau consecutive commits
    // service every worker, so a run of tau covers every block.
    let mut streak = 0usize;
    let mut max_staleness = 0;
    let mut k = 0usize;

    while k < config.max_iters {
        while let Some(&Due(t, _)) = queue.peek() {
            if t > now {
                break;
            }
            let Due(t, w) = queue.pop().expect("peeked");
            ready.insert(w);
            if config.record_events {
                events.push(SimEvent::Arrival { time: t, worker: w });
            }
        }
        if ready.len() < config.min_arrivals || !gate_allows(&slots, &ready, tau) {
            match queue.peek() {
                Some(&Due(t, _)) => {
                    now = now.max(t);
                    continue;
                }
                None => {
                    return Err(Error::InvalidConfig(
                        "simulation stalled with no task in flight".into(),
                    ))
                }
            }
        }

        let arrivals: Vec<(usize, Vector)> = ready
            .iter()
            .map(|&i| {
                let f = slots[i].in_flight.take().expect("ready worker has a result");
                (i, f.x)
            })
            .collect();
        max_staleness = slots
            .iter()
            .filter(|s| !ready.contains(&s.worker_id))
            .map(|s| s.staleness + 1)
            .fold(max_staleness, usize::max);
        let serviced: Vec<usize> = ready.iter().copied().collect();
        ready.clear();

        let start = now;
        let prev_price = price.clone();
        let commit = main_step(&mut slots, &mut state, &arrivals, problem, rho, tau, k)?;
        check_bounded_delay(&slots, k, tau)?;
        now += delays.main_compute;
        price = commit.price;
        state.gamma = price.clone();
        if config.record_events {
            events.push(SimEvent::Commit {
                index: k,
                start,
                end: now,
                arrivals: serviced.clone(),
                lambda_before: commit.lambda_before.clone(),
                lambda_after: state.lambda.clone(),
            });
        }
        dispatch(
            &serviced, &mut slots, &price, problem, config, delays, &compute, &mut rng, now,
            Some(k), &mut queue, &mut events,
        )?;
        k += 1;

        let row = TraceRow {
            iter: k,
            objective: problem.evaluate_objective(&state.x)?,
            lin_residual: commit.lin_residual,
            ineq_violation: 0.0,
            step_norm: commit.step_norm,
            pc_gap: (&prev_price - &state.lambda).norm(),
            dist_to_ref: match &config.reference_point {
                Some(r) => Some(saddle_distance(&state, r)?),
                None => None,
            },
            sim_time: Some(now),
        };
        if let Some(f_star) = f_star {
            ergodic.add(&state.x);
            let avg = ergodic.average();
            ergodic_samples.push(ErgodicSample {
                k,
                objective_gap: (problem.evaluate_objective(&avg)? - f_star).abs(),
                residual: problem.coupling_residuals(&avg)?.linear.norm(),
            });
        }
        streak = if meets_stop_tol(&row, config.stop_tol) { streak + 1 } else { 0 };
        converged = streak >= tau;
        if converged || k == config.max_iters || k.is_multiple_of(config.trace_stride) {
            trace.push(row);
        }
        if converged {
            break;
        }
    }
    if !converged {
        warnings.push(format!(
            "stopped at max_iters = {} before reaching stop_tol",
            config.max_iters
        ));
    }
    Ok(AsyncOutcome {
        state,
        slots,
        trace,
        iterations: k,
        converged,
        sim_time: now,
        ergodic,
        ergodic_samples,
        events,
        max_staleness,
        rho_bound,
        warnings,
    })
}

#[allow(clippy::too_many_arguments)]
fn dispatch(
    workers: &[usize],
    slots: &mut [WorkerSlot],
    price: &Vector,
    problem: &BlockProblem,
    config: &AsyncConfig,
    delays: &DelayModel,
    compute: &[f64],
    rng: &mut ChaCha8Rng,
    now: f64,
    commit: Option<usize>,
    queue: &mut BinaryHeap<Due>,
    events: &mut Vec<SimEvent>,
) -> Result<()> {
    let results = {
        let slots = &*slots;
        par::try_map_indexed(workers.len(), config.parallel_workers, |j| {
            let i = workers[j];
            worker_step(i, price, &slots[i].last_sent_x, problem, config.rho, &config.inner)
        })?
    };
    for (&i, x) in workers.iter().zip(results) {
        let arrival_time = now + compute[i] + delays.sample_comm(rng);
        queue.push(Due(arrival_time, i));
        slots[i].last_sent_x = x.clone();
        slots[i].in_flight = Some(InFlight { arrival_time, x });
        if config.record_events {
            events.push(SimEvent::Dispatch {
                time: now,
                worker: i,
                commit,
                price: price.clone(),
            });
        }
    }
    Ok(())
}

/// Outcome of [`ergodic_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    /// `max_k k ||sum A_i xbar^k - b||`.
    pub c1: f64,
    /// Smallest `C2` with `k |f(xbar^k) - f*| <= delta_lambda C1 + C2` for all `k`.
    pub c2: f64,
    /// Rise of the final-half maximum of `k * gap` over the first-half maximum, relative.
    pub gap_trend: f64,
    pub residual_trend: f64,
    pub pass: bool,
}

/// Relative envelope rise allowed for `k * quantity` over the final half.
pub const ERGODIC_TREND_TOL: f64 = 0.05;

/// Fits the ergodic constants and tests that `k * gap` and `k * residual`
/// show no upward trend over the final half of the samples.
pub fn ergodic_check(samples: &[ErgodicSample], delta_lambda: f64) -> ErgodicReport {
    let c1 = samples
        .iter()
        .map(|s| s.k as f64 * s.residual)
        .fold(0.0, f64::max);
    let c2 = samples
        .iter()
        .map(|s| s.k as f64 * s.objective_gap - delta_lambda * c1)
        .fold(0.0, f64::max);
    // Envelope growth: how far the final half climbs above everything seen before it.
    // A bounded sequence settling from below rises by O(1/k); log or power growth does not.
    let split = samples.len() / 2;
    let trend = |value: &dyn Fn(&ErgodicSample) -> f64| -> f64 {
        let scaled = |s: &ErgodicSample| s.k as f64 * value(s);
        let head = samples[..split].iter().map(scaled).fold(0.0, f64::max);
        let tail = samples[split..].iter().map(scaled).fold(0.0, f64::max);
        let rise = tail - head;
        if rise <= 1e-12 {
            0.0
        } else {
            rise / head.max(1e-300)
        }
    };
    let gap_trend = trend(&|s| s.objective_gap);
    let residual_trend = trend(&|s| s.residual);
    let finite = c1.is_finite() && c2.is_finite();
    ErgodicReport {
        c1,
        c2,
        gap_trend,
        residual_trend,
        pass: finite && gap_trend <= ERGODIC_TREND_TOL && residual_trend <= ERGODIC_TREND_TOL,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::problem::{CouplingMap, Quadratic, Zero};
    use crate::Matrix;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_row_slice(xs)
    }

    fn half_square(name: &str) -> Block {
        Block::new(Arc::new(
            Quadratic::new(Matrix::from_element(1, 1, 1.0), v(&[0.0]), 0.0).unwrap(),
        ))
        .with_strong_convexity(1.0)
        .with_linear(CouplingMap::dense(Matrix::from_element(1, 1, 1.0)))
        .named(name)
    }

    #[test]
    fn bound_examples() {
        assert_eq!(async_step_size_bound(1.0, 3, 1, 2.0, false).unwrap(), f64::INFINITY);
        assert!((async_step_size_bound(1.0, 1, 2, 1.0, false).unwrap() - 0.04).abs() < 1e-15);
        assert!((async_step_size_bound(1.0, 1, 2, 1.0, true).unwrap() - 0.04).abs() < 1e-15);
        assert!((async_step_size_bound(25.0, 1, 2, 2.0, false).unwrap() - 0.25).abs() < 1e-15);
        assert!((async_step_size_bound(25.0, 1, 2, 2.0, true).unwrap() - 0.5).abs() < 1e-15);
        assert!(async_step_size_bound(0.0, 1, 2, 1.0, false).is_err());
    }

    #[test]
    fn worker_step_examples() {
        let inner = InnerSettings::default();
        let b = Block::new(Arc::new(Zero { dim: 1 }));
        let p = BlockProblem::new(vec![b], Vector::zeros(0), 0).unwrap();
        let y = worker_step(0, &Vector::zeros(0), &v(&[2.5]), &p, 1.0, &inner).unwrap();
        assert_eq!(y, v(&[2.5]));

        let p = BlockProblem::new(vec![half_square("a")], v(&[0.0]), 0).unwrap();
        let y = worker_step(0, &v(&[0.0]), &v(&[2.0]), &p, 1.0, &inner).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-12);
        let y = worker_step(0, &v(&[1.0]), &v(&[2.0]), &p, 1.0, &inner).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-12);
    }

    fn slot(i: usize, staleness: usize) -> WorkerSlot {
        WorkerSlot {
            worker_id: i,
            staleness,
            last_sent_x: v(&[0.0]),
            in_flight: None,
            last_serviced: -1,
        }
    }

    #[test]
    fn main_step_arithmetic() {
        let p = BlockProblem::new(vec![half_square("a")], v(&[0.0]), 0).unwrap();
        let mut s = SaddleState::zeros(&p);
        let mut slots = vec![slot(0, 0)];
        let c = main_step(&mut slots, &mut s, &[(0, v(&[1.0]))], &p, 1.0, 1, 0).unwrap();
        assert_eq!(s.lambda, v(&[1.0]));
        assert_eq!(c.price, v(&[2.0]));

        // zero residual leaves lambda alone and the price equal to it
        let mut s = SaddleState::zeros(&p);
        s.lambda = v(&[0.3]);
        let c = main_step(&mut slots, &mut s, &[(0, v(&[0.0]))], &p, 1.0, 1, 1).unwrap();
        assert_eq!(s.lambda, v(&[0.3]));
        assert_eq!(c.price, s.lambda);
    }

    #[test]
    fn main_step_refuses_stale_commit() {
        let p = BlockProblem::new(vec![half_square("a"), half_square("b")], v(&[0.0]), 0).unwrap();
        let mut s = SaddleState::zeros(&p);
        let mut slots = vec![slot(0, 0), slot(1, 1)];
        let arrivals = [(0, v(&[1.0]))];
        assert!(!gate_allows(&slots, &BTreeSet::from([0]), 2));
        let e = main_step(&mut slots, &mut s, &arrivals, &p, 1.0, 2, 5).unwrap_err();
        assert!(matches!(e, Error::StalenessViolation { worker: 1, .. }));
        // with tau = 1 every worker must arrive
        let mut slots = vec![slot(0, 0), slot(1, 0)];
        assert!(main_step(&mut slots, &mut s, &arrivals, &p, 1.0, 1, 0).is_err());
    }

    #[test]
    fn nonlinear_coupling_rejected() {
        let g = Arc::new(Quadratic::linear(v(&[1.0]), 0.0));
        let b = Block::new(Arc::new(Zero { dim: 1 })).with_nonlinear(0, g, 1.0);
        let p = BlockProblem::new(vec![b], Vector::zeros(0), 1).unwrap();
        let e = run_simulation(&p, &DelayModel::default(), &AsyncConfig::default()).unwrap_err();
        assert!(matches!(e, Error::NonlinearCouplingInAsync(1)));
    }

    #[test]
    fn per_class_lookup() {
        let d = DelayModel::vertex_edge(0);
        assert_eq!(d.compute_time(&half_square("vertex:3")).unwrap(), 1.2);
        assert_eq!(d.compute_time(&half_square("edge:1-2")).unwrap(), 0.6);
        assert!(d.compute_time(&half_square("other")).is_err());
        let json = r#"{"main_compute":1.0,"worker_compute":0.5,"comm_low":0.0,"comm_high":0.0,"seed":3}"#;
        let d: DelayModel = serde_json::from_str(json).unwrap();
        assert_eq!(d.worker_compute, WorkerCompute::Uniform(0.5));
    }

    #[test]
    fn ergodic_check_examples() {
        let flat: Vec<_> = (1..=200)
            .map(|k| ErgodicSample {
                k,
                objective_gap: 0.0,
                residual: 0.0,
            })
            .collect();
        assert!(ergodic_check(&flat, 1.0).pass);

        let decaying: Vec<_> = (1..=200)
            .map(|k| ErgodicSample {
                k,
                objective_gap: 3.0 / k as f64,
                residual: 2.0 / k as f64,
            })
            .collect();
        let r = ergodic_check(&decaying, 1.0);
        assert!(r.pass);
        assert!((r.c1 - 2.0).abs() < 1e-12);
        assert!((r.c2 - 1.0).abs() < 1e-12);

        let growing: Vec<_> = (1..=200)
            .map(|k| ErgodicSample {
                k,
                objective_gap: 0.0,
                residual: (k as f64).sqrt(),
            })
            .collect();
        assert!(!ergodic_check(&growing, 1.0).pass);

        let logarithmic: Vec<_> = (1..=5000)
            .map(|k| ErgodicSample {
                k,
                objective_gap: (k as f64).ln() / k as f64,
                residual: 0.0,
            })
            .collect();
        assert!(!ergodic_check(&logarithmic, 1.0).pass);

        // Settles from below at rate 1/k: bounded, so it passes.
        let settling: Vec<_> = (1..=5000)
            .map(|k| ErgodicSample {
                k,
                objective_gap: (5.0 - 50.0 / k as f64).max(0.0) / k as f64,
                residual: 1.0 / k as f64,
            })
            .collect();
        assert!(ergodic_check(&settling, 1.0).pass);
    }
}
