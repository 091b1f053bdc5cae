//! Proximal subproblem solvers.
//!
//! Every subproblem has the form
//!
//! ```text
//! argmin_{x in X}  f(x) + p'x + sum_j nu_j g_j(x) + 1/(2 rho) ||x - base||^2
//! ```
//!
//! which is `1/rho`-strongly convex, so the minimiser is unique. Quadratic
//! objectives without active nonlinear terms take a closed-form path; all
//! other cases go through a backtracking projected (proximal) gradient loop.

use crate::error::{Error, Result};
use crate::problem::{BlockProblem, ConvexFn, FeasibleSet};
use crate::{Matrix, Vector};

/// Inner solver knobs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InnerSettings {
    /// Bound on the norm of the projected gradient mapping at the returned point.
    pub tol: f64,
    pub max_iters: usize,
    /// Backtracking shrink factor in (0, 1).
    pub shrink: f64,
    /// Step growth after an accepted step, >= 1.
    pub grow: f64,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 10_000,
            shrink: 0.5,
            grow: 1.25,
        }
    }
}

/// One block subproblem of the primal minimisation step.
#[derive(Debug, Clone, Copy)]
pub struct ProxTask<'a> {
    pub block_index: usize,
    pub base_point: &'a Vector,
    pub rho: f64,
    /// Price on the linear coupling (length `m`).
    pub linear_price: &'a Vector,
    /// Prices on the nonlinear coupling rows (length `M`, nonnegative).
    pub nonlinear_price: &'a Vector,
    pub settings: &'a InnerSettings,
}

impl ProxTask<'_> {
    fn validate(&self, problem: &BlockProblem) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidConfig(format!("rho must be positive, got {}", self.rho)));
        }
        if self.block_index >= problem.num_blocks() {
            return Err(Error::InvalidConfig(format!(
                "block {} does not exist",
                self.block_index
            )));
        }
        let block = problem.block(self.block_index);
        if self.base_point.len() != block.dim() {
            return Err(Error::DimensionMismatch {
                block: self.block_index,
                expected: block.dim(),
                found: self.base_point.len(),
                what: "prox base point",
            });
        }
        if self.linear_price.len() != problem.num_linear() {
            return Err(Error::DimensionMismatch {
                block: self.block_index,
                expected: problem.num_linear(),
                found: self.linear_price.len(),
                what: "linear price",
            });
        }
        if self.nonlinear_price.len() != problem.num_nonlinear() {
            return Err(Error::DimensionMismatch {
                block: self.block_index,
                expected: problem.num_nonlinear(),
                found: self.nonlinear_price.len(),
                what: "nonlinear price",
            });
        }
        if self.nonlinear_price.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::InvalidConfig("nonlinear prices must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Solves the subproblem of one block at the given prices.
pub fn solve_block_prox(task: &ProxTask<'_>, problem: &BlockProblem) -> Result<Vector> {
    task.validate(problem)?;
    let block = problem.block(task.block_index);
    let price = block.linear.transpose_apply(task.linear_price);
    let active: Vec<(&dyn ConvexFn, f64)> = block
        .nonlinear
        .iter()
        .filter_map(|t| {
            let nu = task.nonlinear_price[t.row];
            (nu > 0.0).then_some((t.func.as_ref(), nu))
        })
        .collect();

    if let Some((q, c)) = aggregate_quadratic(block.objective.as_ref(), &price, &active) {
        let n = c.len();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || q[(i, j)] == 0.0));
        if block.feasible.is_whole() || (block.feasible.is_separable() && diagonal) {
            return closed_form_quadratic_prox(
                &q,
                &c,
                task.base_point,
                task.rho,
                &block.feasible,
                task.settings,
            )
            .map_err(|e| e.in_block(task.block_index));
        }
    }

    let composite = Composite {
        f: block.objective.as_ref(),
        price: Some(&price),
        terms: &active,
        base: task.base_point,
        inv_rho: 1.0 / task.rho,
        set: &block.feasible,
    };
    minimize(&composite, task.rho, task.settings).map_err(|e| e.in_block(task.block_index))
}

/// `(Q, c)` of `f + price'x + sum nu_j g_j` when every piece is quadratic.
fn aggregate_quadratic(
    f: &dyn ConvexFn,
    price: &Vector,
    active: &[(&dyn ConvexFn, f64)],
) -> Option<(Matrix, Vector)> {
    let fq = f.as_quadratic()?;
    let mut q = fq.q.clone();
    let mut c = &fq.c + price;
    for (g, nu) in active {
        let gq = g.as_quadratic()?;
        q += &gq.q * *nu;
        c += &gq.c * *nu;
    }
    Some((q, c))
}

/// `argmin_{z in Z} F(z) + 1/(2 rho) ||z - center||^2`.
pub fn prox_point(
    f: &dyn ConvexFn,
    center: &Vector,
    rho: f64,
    set: &FeasibleSet,
    settings: &InnerSettings,
) -> Result<Vector> {
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    if center.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            block: 0,
            expected: f.dim(),
            found: center.len(),
            what: "prox center",
        });
    }
    let composite = Composite {
        f,
        price: None,
        terms: &[],
        base: center,
        inv_rho: 1.0 / rho,
        set,
    };
    minimize(&composite, rho, settings)
}

/// Exact minimiser of `1/2 x'Qx + c'x + 1/(2 rho)||x - base||^2` over `set`.
///
/// Diagonal `Q` with a separable set is solved coordinatewise and clamped;
/// otherwise `(Q + I/rho) x = base/rho - c` is solved by Cholesky. A
/// non-diagonal `Q` with a constraining set falls back to the iterative solver.
pub fn closed_form_quadratic_prox(
    q: &Matrix,
    c: &Vector,
    base: &Vector,
    rho: f64,
    set: &FeasibleSet,
    settings: &InnerSettings,
) -> Result<Vector> {
    let n = c.len();
    if q.nrows() != n || q.ncols() != n || base.len() != n {
        return Err(Error::DimensionMismatch {
            block: 0,
            expected: n,
            found: base.len().max(q.nrows()),
            what: "quadratic prox operands",
        });
    }
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    let inv_rho = 1.0 / rho;
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || q[(i, j)] == 0.0));

    if diagonal && set.is_separable() {
        let mut x = Vector::zeros(n);
        for i in 0..n {
            let qi = q[(i, i)];
            if qi < 0.0 {
                return Err(Error::NotPositiveSemidefinite(format!(
                    "diagonal entry {i} is {qi}"
                )));
            }
            x[i] = (base[i] * inv_rho - c[i]) / (qi + inv_rho);
        }
        return Ok(set.project(&x));
    }

    if set.is_whole() {
        let mut h = q.clone();
        for i in 0..n {
            h[(i, i)] += inv_rho;
        }
        let chol = h.cholesky().ok_or_else(|| {
            Error::NotPositiveSemidefinite("Q + I/rho has no Cholesky factor".into())
        })?;
        return Ok(chol.solve(&(base * inv_rho - c)));
    }

    let quad = crate::problem::Quadratic::new(q.clone(), c.clone(), 0.0)?;
    prox_point(&quad, base, rho, set, settings)
}

const DYKSTRA_ITERS: usize = 10_000;
const DYKSTRA_TOL: f64 = 1e-14;

/// Objective of one subproblem. When `f` has a closed-form prox and is not
/// smooth it is handled in the backward step, everything else is in the
/// smooth part.
struct Composite<'a> {
    f: &'a dyn ConvexFn,
    price: Option<&'a Vector>,
    terms: &'a [(&'a dyn ConvexFn, f64)],
    base: &'a Vector,
    inv_rho: f64,
    set: &'a FeasibleSet,
}

impl Composite<'_> {
    fn f_split(&self) -> bool {
        !self.f.is_smooth() && self.f.has_prox()
    }

    fn smooth_everywhere(&self) -> bool {
        (self.f.is_smooth() || self.f_split()) && self.terms.iter().all(|(g, _)| g.is_smooth())
    }

    /// Value and gradient of the smooth part.
    fn smooth(&self, x: &Vector, with_f: bool) -> (f64, Vector) {
        let d = x - self.base;
        let mut value = 0.5 * self.inv_rho * d.norm_squared();
        let mut grad = d * self.inv_rho;
        if with_f {
            value += self.f.value(x);
            grad += self.f.subgradient(x);
        }
        if let Some(p) = self.price {
            value += p.dot(x);
            grad += p;
        }
        for (g, nu) in self.terms {
            value += nu * g.value(x);
            grad.axpy(*nu, &g.subgradient(x), 1.0);
        }
        (value, grad)
    }

    fn smooth_value(&self, x: &Vector, with_f: bool) -> f64 {
        let d = x - self.base;
        let mut value = 0.5 * self.inv_rho * d.norm_squared();
        if with_f {
            value += self.f.value(x);
        }
        if let Some(p) = self.price {
            value += p.dot(x);
        }
        for (g, nu) in self.terms {
            value += nu * g.value(x);
        }
        value
    }

    fn backward(&self, v: &Vector, t: f64, split: bool) -> Vector {
        if !split {
            return self.set.project(v);
        }
        let prox = |z: &Vector| self.f.prox(z, t).expect("split objectives have a prox");
        if self.set.is_separable() {
            // a 1-D prox followed by an interval clamp is the prox of the sum
            return self.set.project(&prox(v));
        }
        // proximal Dykstra for prox of t f + indicator of the set
        let mut x = v.clone();
        let mut p = Vector::zeros(v.len());
        let mut q = Vector::zeros(v.len());
        for _ in 0..DYKSTRA_ITERS {
            let y = prox(&(&x + &p));
            p += &x - &y;
            let x_new = self.set.project(&(&y + &q));
            q += &y - &x_new;
            // the projection can stall on one point while p and q still move,
            // so also ask the two iterates to agree
            let moved = (&x_new - &x).amax().max((&y - &x_new).amax());
            x = x_new;
            if moved <= DYKSTRA_TOL * (1.0 + x.amax()) {
                break;
            }
        }
        x
    }

    fn value(&self, x: &Vector) -> f64 {
        self.smooth_value(x, true)
    }
}

fn minimize(problem: &Composite<'_>, rho: f64, settings: &InnerSettings) -> Result<Vector> {
    if problem.smooth_everywhere() {
        proximal_gradient(problem, rho, settings)
    } else {
        subgradient_descent(problem, rho, settings)
    }
}

fn proximal_gradient(problem: &Composite<'_>, rho: f64, settings: &InnerSettings) -> Result<Vector> {
    let split = problem.f_split();
    let with_f = !split;
    let mut x = problem.backward(problem.base, rho, split);
    // L >= 1/rho, so rho is an upper bound on a safe step
    let mut t = rho;
    let mut residual = f64::INFINITY;
    let (_, mut g) = problem.smooth(&x, with_f);

    for _ in 0..settings.max_iters {
        // Curvature test (g_new - g)'d <= |d|^2 / (2t). By convexity it implies
        // the usual sufficient decrease, and unlike a comparison of function
        // values it does not drown in rounding once steps get tiny.
        let mut accepted = None;
        for _ in 0..200 {
            let x_new = problem.backward(&(&x - &g * t), t, split);
            let d = &x_new - &x;
            let dd = d.norm_squared();
            let (_, g_new) = problem.smooth(&x_new, with_f);
            if dd == 0.0 || (&g_new - &g).dot(&d) <= 0.5 * dd / t {
                accepted = Some((x_new, g_new, dd.sqrt()));
                break;
            }
            t *= settings.shrink;
        }
        let Some((x_new, g_new, step)) = accepted else {
            break;
        };
        residual = step / t;
        x = x_new;
        g = g_new;
        if residual <= settings.tol {
            return Ok(x);
        }
        t = (t * settings.grow).min(rho);
    }
    Err(Error::InnerSolver {
        block: None,
        iterations: settings.max_iters,
        residual,
        best: x,
    })
}

/// Projected subgradient descent for objectives with nonsmooth parts and no
/// closed-form prox. Step `rho/(k+1)` matches the `1/rho` strong convexity.
fn subgradient_descent(problem: &Composite<'_>, rho: f64, settings: &InnerSettings) -> Result<Vector> {
    let mut x = problem.set.project(problem.base);
    let mut best = x.clone();
    let mut best_value = problem.value(&x);
    let mut movement = f64::INFINITY;
    for k in 0..settings.max_iters {
        let (_, g) = problem.smooth(&x, true);
        let step = rho / (k as f64 + 1.0);
        let next = problem.set.project(&(&x - g * step));
        movement = (&next - &x).norm();
        x = next;
        let v = problem.value(&x);
        if v < best_value {
            best_value = v;
            best = x.clone();
        }
        if movement <= settings.tol {
            return Ok(best);
        }
    }
    Err(Error::InnerSolver {
        block: None,
        iterations: settings.max_iters,
        residual: movement,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{Block, CouplingMap, L1Norm, Quadratic, SmoothFn, Zero};
    use std::sync::Arc;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_vec(xs.to_vec())
    }

    fn half_square() -> Arc<Quadratic> {
        Arc::new(Quadratic::new(Matrix::identity(1, 1), v(&[0.0]), 0.0).unwrap())
    }

    fn scalar_problem(set: FeasibleSet) -> BlockProblem {
        let b = Block::new(half_square())
            .with_linear(CouplingMap::dense(Matrix::identity(1, 1)))
            .with_set(set);
        BlockProblem::new(vec![b], v(&[0.0]), 0).unwrap()
    }

    fn task<'a>(
        base: &'a Vector,
        gamma: &'a Vector,
        nu: &'a Vector,
        s: &'a InnerSettings,
    ) -> ProxTask<'a> {
        ProxTask {
            block_index: 0,
            base_point: base,
            rho: 1.0,
            linear_price: gamma,
            nonlinear_price: nu,
            settings: s,
        }
    }

    #[test]
    fn prox_of_constant_is_base() {
        let s = InnerSettings::default();
        let p = BlockProblem::new(vec![Block::new(Arc::new(Zero { dim: 3 }))], v(&[]), 0).unwrap();
        let base = v(&[1.0, -2.0, 0.5]);
        let (g, nu) = (v(&[]), v(&[]));
        let x = solve_block_prox(&task(&base, &g, &nu, &s), &p).unwrap();
        assert_eq!(x, base);
    }

    #[test]
    fn scalar_stationarity() {
        let s = InnerSettings::default();
        let p = scalar_problem(FeasibleSet::Whole);
        let (base, g, nu) = (v(&[2.0]), v(&[0.0]), v(&[]));
        let x = solve_block_prox(&task(&base, &g, &nu, &s), &p).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_clamped_to_box() {
        let s = InnerSettings::default();
        let p = scalar_problem(FeasibleSet::interval(0.0, 0.5));
        let (base, g, nu) = (v(&[2.0]), v(&[0.0]), v(&[]));
        let x = solve_block_prox(&task(&base, &g, &nu, &s), &p).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn generic_path_matches_closed_form_for_smooth_wrapper() {
        // same quadratic behind an opaque closure forces the iterative path
        let s = InnerSettings::default();
        let f = SmoothFn::new("half-square", 1, |x: &Vector| 0.5 * x[0] * x[0], |x: &Vector| x.clone());
        let b = Block::new(Arc::new(f)).with_linear(CouplingMap::dense(Matrix::identity(1, 1)));
        let p = BlockProblem::new(vec![b], v(&[0.0]), 0).unwrap();
        let (base, g, nu) = (v(&[2.0]), v(&[1.0]), v(&[]));
        let x = solve_block_prox(&task(&base, &g, &nu, &s), &p).unwrap();
        // x + 1 + (x - 2) = 0
        assert!((x[0] - 0.5).abs() < 1e-10);
    }

    #[test]
    fn prox_point_cases() {
        let s = InnerSettings::default();
        let center = v(&[0.4, -1.0]);
        let x = prox_point(&Zero { dim: 2 }, &center, 0.7, &FeasibleSet::Whole, &s).unwrap();
        assert_eq!(x, center);

        let c = v(&[1.5, -0.5]);
        let lin = Quadratic::linear(c.clone(), 0.0);
        let x = prox_point(&lin, &center, 0.7, &FeasibleSet::Whole, &s).unwrap();
        assert!((x - (&center - &c * 0.7)).norm() < 1e-10);

        let l1 = L1Norm { dim: 1, scale: 1.0 };
        let x = prox_point(&l1, &v(&[0.3]), 1.0, &FeasibleSet::Whole, &s).unwrap();
        assert!(x[0].abs() < 1e-12);
    }

    #[test]
    fn closed_form_cases() {
        let s = InnerSettings::default();
        let x = closed_form_quadratic_prox(
            &Matrix::zeros(2, 2),
            &v(&[0.0, 0.0]),
            &v(&[3.0, -1.0]),
            0.3,
            &FeasibleSet::Whole,
            &s,
        )
        .unwrap();
        assert_eq!(x, v(&[3.0, -1.0]));

        let x = closed_form_quadratic_prox(
            &Matrix::identity(2, 2),
            &v(&[0.0, 0.0]),
            &v(&[2.0, 0.0]),
            1.0,
            &FeasibleSet::Whole,
            &s,
        )
        .unwrap();
        assert!((x - v(&[1.0, 0.0])).norm() < 1e-15);

        let x = closed_form_quadratic_prox(
            &Matrix::from_element(1, 1, 2.0),
            &v(&[-6.0]),
            &v(&[0.0]),
            0.5,
            &FeasibleSet::interval(0.0, 1.0),
            &s,
        )
        .unwrap();
        assert_eq!(x[0], 1.0);
    }

    #[test]
    fn non_psd_fails_factorization() {
        let s = InnerSettings::default();
        let q = Matrix::from_row_slice(2, 2, &[-5.0, 1.0, 1.0, 1.0]);
        let r = closed_form_quadratic_prox(&q, &v(&[0.0, 0.0]), &v(&[1.0, 1.0]), 1.0, &FeasibleSet::Whole, &s);
        assert!(matches!(r, Err(Error::NotPositiveSemidefinite(_))));
    }

    #[test]
    fn negative_rho_rejected() {
        let s = InnerSettings::default();
        let p = scalar_problem(FeasibleSet::Whole);
        let (base, g, nu) = (v(&[2.0]), v(&[0.0]), v(&[]));
        let mut t = task(&base, &g, &nu, &s);
        t.rho = -1.0;
        assert!(solve_block_prox(&t, &p).is_err());
    }

    #[test]
    fn inner_cap_reports_best_iterate() {
        let s = InnerSettings {
            max_iters: 3,
            ..InnerSettings::default()
        };
        let f = SmoothFn::new(
            "quartic",
            1,
            |x: &Vector| x[0].powi(4),
            |x: &Vector| v(&[4.0 * x[0].powi(3)]),
        );
        match prox_point(&f, &v(&[3.0]), 10.0, &FeasibleSet::Whole, &s) {
            Err(Error::InnerSolver { best, iterations, .. }) => {
                assert_eq!(iterations, 3);
                assert_eq!(best.len(), 1);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }
}
