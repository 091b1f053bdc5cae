//! Block-separable convex programs
//!
//! ```text
//! minimize   sum_i f_i(x_i)
//! subject to x_i in X_i
//!            sum_i A_i x_i = b
//!            sum_i g_ji(x_i) <= 0,   j = 1..M
//! ```
//!
//! Each [`Block`] owns its objective, feasible set, slice of the linear
//! coupling and the coupling functions `g_ji` it participates in.

pub mod audit;
mod coupling;
mod functions;
mod sets;

use std::sync::Arc;

pub use coupling::{CouplingMap, RowSlab};
pub use functions::{ConvexFn, L1Norm, Quadratic, SmoothFn, Zero};
pub use sets::FeasibleSet;

use crate::error::{Error, Result};
use crate::Vector;

/// Term `g_ji(x_i)` of nonlinear coupling row `row`.
#[derive(Debug, Clone)]
pub struct NonlinearTerm {
    pub row: usize,
    pub func: Arc<dyn ConvexFn>,
    /// Declared Lipschitz modulus on the block's feasible set.
    pub lipschitz: f64,
}

#[derive(Debug, Clone)]
pub struct Block {
    pub name: Option<String>,
    pub objective: Arc<dyn ConvexFn>,
    /// Strong convexity modulus of the objective, 0 when merely convex.
    pub strong_convexity: f64,
    pub feasible: FeasibleSet,
    pub linear: CouplingMap,
    /// Rows this block does not appear in are implicitly zero.
    pub nonlinear: Vec<NonlinearTerm>,
}

impl Block {
    pub fn new(objective: Arc<dyn ConvexFn>) -> Self {
        let dim = objective.dim();
        Self {
            name: None,
            objective,
            strong_convexity: 0.0,
            feasible: FeasibleSet::Whole,
            linear: CouplingMap::zero(0, dim),
            nonlinear: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_strong_convexity(mut self, sigma: f64) -> Self {
        self.strong_convexity = sigma;
        self
    }

    pub fn with_set(mut self, set: FeasibleSet) -> Self {
        self.feasible = set;
        self
    }

    pub fn with_linear(mut self, map: CouplingMap) -> Self {
        self.linear = map;
        self
    }

    pub fn with_nonlinear(mut self, row: usize, func: Arc<dyn ConvexFn>, lipschitz: f64) -> Self {
        self.nonlinear.push(NonlinearTerm {
            row,
            func,
            lipschitz,
        });
        self
    }
}

/// A full block-separable program.
#[derive(Debug, Clone)]
pub struct BlockProblem {
    blocks: Vec<Block>,
    rhs: Vector,
    num_nonlinear: usize,
}

impl BlockProblem {
    /// Validates shapes. Blocks whose linear map has no slabs are resized to
    /// the zero map with `rhs.len()` rows.
    pub fn new(mut blocks: Vec<Block>, rhs: Vector, num_nonlinear: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidProblem("a problem needs at least one block".into()));
        }
        let m = rhs.len();
        for (i, b) in blocks.iter_mut().enumerate() {
            let n = b.dim();
            if b.linear.is_zero() {
                b.linear.set_rows(m);
            }
            if b.linear.rows() != m {
                return Err(Error::DimensionMismatch {
                    block: i,
                    expected: m,
                    found: b.linear.rows(),
                    what: "rows of linear coupling",
                });
            }
            if b.linear.cols() != n {
                return Err(Error::DimensionMismatch {
                    block: i,
                    expected: n,
                    found: b.linear.cols(),
                    what: "columns of linear coupling",
                });
            }
            if let Some(d) = b.feasible.dim() {
                if d != n {
                    return Err(Error::DimensionMismatch {
                        block: i,
                        expected: n,
                        found: d,
                        what: "feasible set dimension",
                    });
                }
            }
            for t in &b.nonlinear {
                if t.row >= num_nonlinear {
                    return Err(Error::InvalidProblem(format!(
                        "block {i} references nonlinear row {} but the problem has {num_nonlinear}",
                        t.row
                    )));
                }
                if t.func.dim() != n {
                    return Err(Error::DimensionMismatch {
                        block: i,
                        expected: n,
                        found: t.func.dim(),
                        what: "nonlinear term dimension",
                    });
                }
            }
            if !(b.strong_convexity >= 0.0) {
                return Err(Error::InvalidProblem(format!(
                    "block {i} declares a negative strong convexity modulus"
                )));
            }
        }
        Ok(Self {
            blocks,
            rhs,
            num_nonlinear,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, i: usize) -> &Block {
        &self.blocks[i]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn rhs(&self) -> &Vector {
        &self.rhs
    }

    /// `m`, the number of linear coupling rows.
    pub fn num_linear(&self) -> usize {
        self.rhs.len()
    }

    /// `M`, the number of nonlinear coupling rows.
    pub fn num_nonlinear(&self) -> usize {
        self.num_nonlinear
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(Block::dim).sum()
    }

    pub fn a_max(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.linear.spectral_norm())
            .fold(0.0, f64::max)
    }

    pub fn l_max(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.nonlinear.iter().map(|t| t.lipschitz))
            .fold(0.0, f64::max)
    }

    pub fn sigma_min(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.strong_convexity)
            .fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn check_point(&self, x: &[Vector]) -> Result<()> {
        if x.len() != self.blocks.len() {
            return Err(Error::DimensionMismatch {
                block: x.len().min(self.blocks.len()),
                expected: self.blocks.len(),
                found: x.len(),
                what: "number of blocks",
            });
        }
        for (i, (b, xi)) in self.blocks.iter().zip(x).enumerate() {
            if xi.len() != b.dim() {
                return Err(Error::DimensionMismatch {
                    block: i,
                    expected: b.dim(),
                    found: xi.len(),
                    what: "block variable",
                });
            }
        }
        Ok(())
    }

    /// Sum of the block objectives.
    pub fn evaluate_objective(&self, x: &[Vector]) -> Result<f64> {
        self.check_point(x)?;
        Ok(self
            .blocks
            .iter()
            .zip(x)
            .map(|(b, xi)| b.objective.value(xi))
            .sum())
    }

    /// `(sum_i A_i x_i - b, [sum_i g_ji(x_i)]_j)`, signed and unclamped.
    ///
    /// Sums run in block order so results never depend on scheduling.
    pub fn coupling_residuals(&self, x: &[Vector]) -> Result<Residuals> {
        self.check_point(x)?;
        let mut linear = Vector::zeros(self.num_linear());
        let mut nonlinear = Vector::zeros(self.num_nonlinear);
        for (b, xi) in self.blocks.iter().zip(x) {
            b.linear.apply_add(xi, &mut linear);
            for t in &b.nonlinear {
                nonlinear[t.row] += t.func.value(xi);
            }
        }
        linear -= &self.rhs;
        Ok(Residuals { linear, nonlinear })
    }

    /// `(||lin||_2, max_j (nonlin_j)_+)`.
    pub fn violation_norms(&self, x: &[Vector]) -> Result<(f64, f64)> {
        Ok(self.coupling_residuals(x)?.violation_norms())
    }

    /// `L(x, lambda, mu)`.
    pub fn lagrangian(&self, x: &[Vector], lambda: &Vector, mu: &Vector) -> Result<f64> {
        let f = self.evaluate_objective(x)?;
        let r = self.coupling_residuals(x)?;
        Ok(f + lambda.dot(&r.linear) + mu.dot(&r.nonlinear))
    }

    /// Whether every block lies in its feasible set, within `tol`.
    pub fn feasible_point_check(&self, x: &[Vector], tol: f64) -> Result<bool> {
        self.check_point(x)?;
        Ok(self
            .blocks
            .iter()
            .zip(x)
            .all(|(b, xi)| b.feasible.contains(xi, tol)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub linear: Vector,
    pub nonlinear: Vector,
}

impl Residuals {
    pub fn violation_norms(&self) -> (f64, f64) {
        let worst = self
            .nonlinear
            .iter()
            .copied()
            .fold(0.0, |acc: f64, v| acc.max(v));
        (self.linear.norm(), worst)
    }
}

/// Primal iterate, committed multipliers `(lambda, mu)` and predictors `(gamma, nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaddleState {
    pub x: Vec<Vector>,
    pub lambda: Vector,
    pub mu: Vector,
    pub gamma: Vector,
    pub nu: Vector,
}

impl SaddleState {
    pub fn zeros(problem: &BlockProblem) -> Self {
        let x = problem
            .blocks()
            .iter()
            .map(|b| b.feasible.project(&Vector::zeros(b.dim())))
            .collect();
        Self::from_primal(problem, x)
    }

    pub fn from_primal(problem: &BlockProblem, x: Vec<Vector>) -> Self {
        let m = problem.num_linear();
        let big_m = problem.num_nonlinear();
        Self {
            x,
            lambda: Vector::zeros(m),
            mu: Vector::zeros(big_m),
            gamma: Vector::zeros(m),
            nu: Vector::zeros(big_m),
        }
    }
}
