//! Sampling-based checks of declared block properties.
//!
//! Lipschitz moduli and strong-convexity constants are user declarations;
//! these helpers test them against random samples.

use rand::Rng;

use super::{ConvexFn, FeasibleSet};
use crate::Vector;

/// Central finite-difference gradient with step `h`.
pub fn finite_difference_gradient(f: &dyn ConvexFn, x: &Vector, h: f64) -> Vector {
    let mut g = Vector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let base = probe[i];
        probe[i] = base + h;
        let up = f.value(&probe);
        probe[i] = base - h;
        let down = f.value(&probe);
        probe[i] = base;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Uniform sample from `[-half_width, half_width]^dim`, projected onto `set`.
pub fn sample_point<R: Rng + ?Sized>(
    rng: &mut R,
    set: &FeasibleSet,
    dim: usize,
    half_width: f64,
) -> Vector {
    let raw = Vector::from_fn(dim, |_, _| rng.random_range(-half_width..=half_width));
    set.project(&raw)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzAudit {
    pub declared: f64,
    pub observed: f64,
}

impl LipschitzAudit {
    pub fn holds(&self) -> bool {
        self.observed <= self.declared * (1.0 + 1e-9) + 1e-12
    }
}

/// Largest sampled `|f(x) - f(y)| / ||x - y||` over pairs in the set.
pub fn max_difference_quotient<R: Rng + ?Sized>(
    rng: &mut R,
    f: &dyn ConvexFn,
    set: &FeasibleSet,
    half_width: f64,
    samples: usize,
) -> f64 {
    let n = f.dim();
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let x = sample_point(rng, set, n, half_width);
        let y = sample_point(rng, set, n, half_width);
        let d = (&x - &y).norm();
        if d > 1e-12 {
            worst = worst.max((f.value(&x) - f.value(&y)).abs() / d);
        }
        // the gradient norm bounds the local quotient for smooth functions
        if f.is_smooth() {
            worst = worst.max(f.subgradient(&x).norm());
        }
    }
    worst
}

pub fn audit_lipschitz<R: Rng + ?Sized>(
    rng: &mut R,
    f: &dyn ConvexFn,
    declared: f64,
    set: &FeasibleSet,
    half_width: f64,
    samples: usize,
) -> LipschitzAudit {
    LipschitzAudit {
        declared,
        observed: max_difference_quotient(rng, f, set, half_width, samples),
    }
}

/// Checks `f(y) >= f(x) + g'(y - x) + sigma/2 ||y - x||^2` on sampled pairs.
pub fn audit_strong_convexity<R: Rng + ?Sized>(
    rng: &mut R,
    f: &dyn ConvexFn,
    sigma: f64,
    set: &FeasibleSet,
    half_width: f64,
    samples: usize,
) -> bool {
    let n = f.dim();
    (0..samples).all(|_| {
        let x = sample_point(rng, set, n, half_width);
        let y = sample_point(rng, set, n, half_width);
        let g = f.subgradient(&x);
        let d = &y - &x;
        let lhs = f.value(&y);
        let rhs = f.value(&x) + g.dot(&d) + 0.5 * sigma * d.norm_squared();
        lhs >= rhs - 1e-9 * (1.0 + lhs.abs())
    })
}

/// Returns `(idempotent, nonexpansive)` over sampled points.
pub fn audit_projection<R: Rng + ?Sized>(
    rng: &mut R,
    set: &FeasibleSet,
    dim: usize,
    half_width: f64,
    samples: usize,
) -> (bool, bool) {
    let mut idempotent = true;
    let mut nonexpansive = true;
    for _ in 0..samples {
        let z1 = Vector::from_fn(dim, |_, _| rng.random_range(-half_width..=half_width));
        let z2 = Vector::from_fn(dim, |_, _| rng.random_range(-half_width..=half_width));
        let p1 = set.project(&z1);
        let p2 = set.project(&z2);
        idempotent &= (set.project(&p1) - &p1).norm() <= 1e-12 * (1.0 + p1.norm());
        nonexpansive &= (&p1 - &p2).norm() <= (&z1 - &z2).norm() + 1e-12;
    }
    (idempotent, nonexpansive)
}
