//! Convex evaluators used for block objectives and coupling functions.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// A convex function of one block of variables.
///
/// Implementations must be pure: the solver evaluates blocks from several
/// threads at once on distinct inputs.
pub trait ConvexFn: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &Vector) -> f64;

    /// Any subgradient at `x`; the gradient when the function is smooth.
    fn subgradient(&self, x: &Vector) -> Vector;

    /// `argmin_z t*f(z) + 1/2 ||z - v||^2`, when it has a closed form.
    fn prox(&self, _v: &Vector, _t: f64) -> Option<Vector> {
        None
    }

    fn has_prox(&self) -> bool {
        false
    }

    /// Whether `subgradient` is a true gradient that is Lipschitz on bounded sets.
    fn is_smooth(&self) -> bool {
        true
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        None
    }
}

/// The zero function on `R^dim`.
#[derive(Debug, Clone, Copy)]
pub struct Zero {
    pub dim: usize,
}

impl ConvexFn for Zero {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _x: &Vector) -> f64 {
        0.0
    }

    fn subgradient(&self, _x: &Vector) -> Vector {
        Vector::zeros(self.dim)
    }

    fn prox(&self, v: &Vector, _t: f64) -> Option<Vector> {
        Some(v.clone())
    }

    fn has_prox(&self) -> bool {
        true
    }
}

/// `1/2 x'Qx + c'x + constant` with symmetric positive semidefinite `Q`.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub q: Matrix,
    pub c: Vector,
    pub constant: f64,
}

impl Quadratic {
    pub fn new(q: Matrix, c: Vector, constant: f64) -> Result<Self> {
        let n = c.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::InvalidProblem(format!(
                "quadratic term is {}x{} but linear term has length {n}",
                q.nrows(),
                q.ncols()
            )));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 * (1.0 + q.amax()) {
            return Err(Error::InvalidProblem(format!(
                "quadratic term is not symmetric (max asymmetry {asym:e})"
            )));
        }
        Ok(Self { q, c, constant })
    }

    pub fn linear(c: Vector, constant: f64) -> Self {
        let n = c.len();
        Self {
            q: Matrix::zeros(n, n),
            c,
            constant,
        }
    }

    /// `1/2 ||x - center||^2_D` for a diagonal weight vector.
    pub fn weighted_distance(weights: &Vector, center: &Vector) -> Self {
        let q = Matrix::from_diagonal(weights);
        let c = -weights.component_mul(center);
        let constant = 0.5 * weights.dot(&center.component_mul(center));
        Self { q, c, constant }
    }

    pub fn is_diagonal(&self) -> bool {
        let n = self.c.len();
        (0..n).all(|i| (0..n).all(|j| i == j || self.q[(i, j)] == 0.0))
    }

    /// Smallest eigenvalue of `Q`, i.e. the strong convexity modulus.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.c.is_empty() {
            return 0.0;
        }
        self.q
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

impl ConvexFn for Quadratic {
    fn dim(&self) -> usize {
        self.c.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x) + self.constant
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        &self.q * x + &self.c
    }

    fn as_quadratic(&self) -> Option<&Quadratic> {
        Some(self)
    }
}

/// `scale * ||x||_1`.
#[derive(Debug, Clone, Copy)]
pub struct L1Norm {
    pub dim: usize,
    pub scale: f64,
}

impl ConvexFn for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        self.scale * x.lp_norm(1)
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        x.map(|v| {
            if v > 0.0 {
                self.scale
            } else if v < 0.0 {
                -self.scale
            } else {
                0.0
            }
        })
    }

    fn prox(&self, v: &Vector, t: f64) -> Option<Vector> {
        let k = t * self.scale;
        Some(v.map(|a| a.signum() * (a.abs() - k).max(0.0)))
    }

    fn has_prox(&self) -> bool {
        true
    }

    fn is_smooth(&self) -> bool {
        false
    }
}

type ValueFn = dyn Fn(&Vector) -> f64 + Send + Sync;
type GradFn = dyn Fn(&Vector) -> Vector + Send + Sync;

/// A differentiable convex function given by closures for its value and gradient.
#[derive(Clone)]
pub struct SmoothFn {
    name: &'static str,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradFn>,
}

impl SmoothFn {
    pub fn new<V, G>(name: &'static str, dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&Vector) -> f64 + Send + Sync + 'static,
        G: Fn(&Vector) -> Vector + Send + Sync + 'static,
    {
        Self {
            name,
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
        }
    }
}

impl fmt::Debug for SmoothFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothFn")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish()
    }
}

impl ConvexFn for SmoothFn {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        (self.value)(x)
    }

    fn subgradient(&self, x: &Vector) -> Vector {
        (self.gradient)(x)
    }
}
