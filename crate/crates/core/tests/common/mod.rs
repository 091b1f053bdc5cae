//! Random problem generators shared by the property and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use npcpm::asynchronous::{DelayModel, WorkerCompute};
use npcpm::problem::{Block, BlockProblem, ConvexFn, CouplingMap, FeasibleSet, L1Norm, Quadratic, SmoothFn};
use npcpm::prox::InnerSettings;
use npcpm::{Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INNER_TOL: f64 = 1e-10;

pub fn inner_settings() -> InnerSettings {
    InnerSettings {
        tol: INNER_TOL,
        ..InnerSettings::default()
    }
}

/// Ten inner tolerances, in the units of each inequality: a stationarity
/// residual r moves the plain prox inequality by at most 2 rho r |zhat - z|
/// and the strongly convex one by r |zhat - z|.
pub fn slack(scale: f64) -> f64 {
    10.0 * INNER_TOL * scale.max(1.0)
}

/// `B'B + shift I` with `B` filled row-major from `entries`.
pub fn psd(n: usize, entries: &[f64], shift: f64) -> Matrix {
    let b = Matrix::from_fn(n, n, |i, j| entries[i * n + j]);
    let mut q = b.transpose() * &b;
    for i in 0..n {
        q[(i, i)] += shift;
    }
    // exact symmetry for the constructor check
    (&q + q.transpose()) * 0.5
}

pub fn quartic(n: usize, weights: Vec<f64>, sigma: f64) -> SmoothFn {
    let w2 = weights.clone();
    SmoothFn::new(
        "quartic",
        n,
        move |x: &Vector| x.iter().zip(&weights).map(|(v, w)| w * v.powi(4)).sum::<f64>() + 0.5 * sigma * x.norm_squared(),
        move |x: &Vector| Vector::from_fn(x.len(), |i, _| 4.0 * w2[i] * x[i].powi(3) + sigma * x[i]),
    )
}

pub fn set_for(kind: u8, n: usize, lo: f64, width: f64) -> FeasibleSet {
    match kind % 4 {
        0 => FeasibleSet::Whole,
        1 => FeasibleSet::Box {
            lower: Vector::from_element(n, lo),
            upper: Vector::from_element(n, lo + width),
        },
        2 => FeasibleSet::NonNegative,
        _ => FeasibleSet::Ball {
            center: Vector::from_element(n, lo),
            radius: width,
        },
    }
}

/// A convex function of the given family with a strong convexity modulus.
/// `entries` needs `n * n + n` values.
pub fn function(family: u8, n: usize, entries: &[f64], shift: f64) -> (Box<dyn ConvexFn>, f64) {
    match family % 4 {
        0 => {
            let q = psd(n, entries, shift);
            let sigma = q.symmetric_eigenvalues().min().max(0.0);
            let c = Vector::from_fn(n, |i, _| entries[n * n + i]);
            (Box::new(Quadratic::new(q, c, 0.0).unwrap()), sigma)
        }
        1 => (
            Box::new(L1Norm {
                dim: n,
                scale: shift + 0.1,
            }),
            0.0,
        ),
        2 => {
            let w = (0..n).map(|i| entries[i].abs() * 0.2).collect();
            (Box::new(quartic(n, w, shift)), shift)
        }
        _ => {
            // linear: the prox reduces to a shifted projection
            let c = Vector::from_fn(n, |i, _| entries[i]);
            (Box::new(Quadratic::linear(c, 1.0)), 0.0)
        }
    }
}

/// Excess of the left side over the right side of the plain and the
/// strongly convex prox inequalities.
pub fn inequality_gap(f: &dyn ConvexFn, sigma: f64, zbar: &Vector, zhat: &Vector, z: &Vector, rho: f64) -> (f64, f64) {
    let lhs1 = 2.0 * rho * (f.value(zhat) - f.value(z));
    let rhs1 = (zbar - z).norm_squared() - (zhat - z).norm_squared() - (zhat - zbar).norm_squared();
    let lhs3 = f.value(zhat) - f.value(z);
    let rhs3 = (zbar - z).norm_squared() / (2.0 * rho)
        - (0.5 * sigma + 0.5 / rho) * (zhat - z).norm_squared()
        - (zhat - zbar).norm_squared() / (2.0 * rho);
    (lhs1 - rhs1, lhs3 - rhs3)
}

pub fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Matrix {
    let entries: Vec<f64> = (0..n * n).map(|_| uniform(rng, -1.0, 1.0)).collect();
    psd(n, &entries, shift)
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| uniform(rng, -scale, scale))
}

/// Small program with `m` linear rows and `big_m` convex quadratic rows,
/// strictly feasible at a random interior point.
pub fn random_problem(seed: u64) -> BlockProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_blocks = rng.random_range(1..=3);
    let m = rng.random_range(0..=2);
    let big_m = if m == 0 { rng.random_range(1..=2) } else { rng.random_range(0..=2) };
    let mut rhs = Vector::zeros(m);
    let mut g_at_interior = vec![0.0; big_m];
    let mut blocks = Vec::new();
    let mut rows: Vec<Vec<(usize, Quadratic)>> = Vec::new();
    for _ in 0..n_blocks {
        let d = rng.random_range(1..=2);
        let interior = random_vector(&mut rng, d, 0.5);
        let q = random_psd(&mut rng, d, 0.2);
        let c = random_vector(&mut rng, d, 1.0);
        let a = Matrix::from_fn(m, d, |_, _| uniform(&mut rng, -1.0, 1.0));
        rhs += &a * &interior;
        let mut block = Block::new(Arc::new(Quadratic::new(q, c, 0.0).unwrap()))
            .with_strong_convexity(0.2)
            .with_linear(CouplingMap::dense(a));
        if rng.random_bool(0.5) {
            block = block.with_set(FeasibleSet::Box {
                lower: Vector::from_element(d, -2.0),
                upper: Vector::from_element(d, 2.0),
            });
        }
        let mut terms = Vec::new();
        for (row, total) in g_at_interior.iter_mut().enumerate() {
            let g = Quadratic::new(random_psd(&mut rng, d, 0.0) * 0.3, random_vector(&mut rng, d, 1.0), 0.0).unwrap();
            *total += g.value(&interior);
            terms.push((row, g));
        }
        blocks.push(block);
        rows.push(terms);
    }
    // the first block carries each row's constant
    for (row, total) in g_at_interior.iter().enumerate() {
        rows[0][row].1.constant = -total - uniform(&mut rng, 0.1, 1.0);
    }
    let blocks = blocks
        .into_iter()
        .zip(rows)
        .map(|(block, terms)| {
            terms
                .into_iter()
                .fold(block, |b, (row, g)| b.with_nonlinear(row, Arc::new(g), 10.0))
        })
        .collect();
    BlockProblem::new(blocks, rhs, big_m).unwrap()
}

/// Strongly convex quadratic blocks with dense linear coupling only. Blocks
/// alternate between the delay classes `fast` and `slow`.
pub fn random_linear_problem(seed: u64, n_blocks: usize) -> BlockProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=3);
    let blocks = (0..n_blocks)
        .map(|i| {
            let d = rng.random_range(1..=3);
            let q = random_psd(&mut rng, d, 0.5);
            let c = random_vector(&mut rng, d, 1.0);
            let a = Matrix::from_fn(m, d, |_, _| uniform(&mut rng, -1.0, 1.0));
            let class = if i % 2 == 0 { "fast" } else { "slow" };
            let mut block = Block::new(Arc::new(Quadratic::new(q, c, 0.0).unwrap()))
                .named(format!("{class}:{i}"))
                .with_strong_convexity(0.5)
                .with_linear(CouplingMap::dense(a));
            if rng.random_bool(0.3) {
                block = block.with_set(FeasibleSet::Box {
                    lower: Vector::from_element(d, -1.5),
                    upper: Vector::from_element(d, 1.5),
                });
            }
            block
        })
        .collect();
    let rhs = random_vector(&mut rng, m, 1.0);
    BlockProblem::new(blocks, rhs, 0).unwrap()
}

/// Delays for the `fast` / `slow` classes, all drawn from `seed`.
pub fn random_delays(seed: u64) -> DelayModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut classes = BTreeMap::new();
    classes.insert("fast".to_string(), uniform(&mut rng, 0.0, 1.0));
    classes.insert("slow".to_string(), uniform(&mut rng, 0.0, 3.0));
    let comm_low = uniform(&mut rng, 0.0, 0.5);
    DelayModel {
        main_compute: uniform(&mut rng, 0.0, 1.5),
        worker_compute: WorkerCompute::PerClass(classes),
        comm_low,
        comm_high: comm_low + uniform(&mut rng, 0.0, 2.0),
        seed,
    }
}
