mod common;

use common::{function, inequality_gap, inner_settings as settings, psd, quartic, set_for, slack};
use npcpm::problem::{ConvexFn, FeasibleSet, L1Norm, Quadratic};
use npcpm::prox::{closed_form_quadratic_prox, prox_point};
use npcpm::{Matrix, Vector};
use proptest::prelude::*;

fn arb_task() -> impl Strategy<Value = (u8, u8, usize, Vec<f64>, f64, f64, Vec<f64>, f64, f64, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|n| {
        (
            any::<u8>(),
            any::<u8>(),
            Just(n),
            prop::collection::vec(-1.5f64..1.5, n * n + n),
            0.0f64..2.0,
            0.05f64..2.0,
            prop::collection::vec(-3.0f64..3.0, n),
            -1.0f64..0.5,
            0.2f64..3.0,
            prop::collection::vec(-4.0f64..4.0, 5 * n),
        )
    })
}


proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn prox_point_inequality(
        (family, set_kind, n, entries, shift, rho, center, lo, width, samples) in arb_task()
    ) {
        let (f, _) = function(family, n, &entries, shift);
        let set = set_for(set_kind, n, lo, width);
        let zbar = Vector::from_vec(center);
        let zhat = prox_point(f.as_ref(), &zbar, rho, &set, &settings()).unwrap();
        prop_assert!(set.contains(&zhat, 1e-12));
        for s in samples.chunks(n) {
            let z = set.project(&Vector::from_row_slice(s));
            let (excess, _) = inequality_gap(f.as_ref(), 0.0, &zbar, &zhat, &z, rho);
            let allowed = slack(2.0 * rho * (&zhat - &z).norm());
            prop_assert!(excess <= allowed, "excess {excess:e} over {allowed:e}");
        }
    }

    #[test]
    fn strongly_convex_prox_point_inequality(
        (family, set_kind, n, entries, shift, rho, center, lo, width, samples) in arb_task()
    ) {
        // quadratic and quartic families with a positive modulus
        let family = if family % 2 == 0 { 0 } else { 2 };
        let (f, sigma) = function(family, n, &entries, shift + 0.1);
        prop_assert!(sigma > 0.0);
        let set = set_for(set_kind, n, lo, width);
        let zbar = Vector::from_vec(center);
        let zhat = prox_point(f.as_ref(), &zbar, rho, &set, &settings()).unwrap();
        for s in samples.chunks(n) {
            let z = set.project(&Vector::from_row_slice(s));
            let (_, excess) = inequality_gap(f.as_ref(), sigma, &zbar, &zhat, &z, rho);
            let allowed = slack((&zhat - &z).norm());
            prop_assert!(excess <= allowed, "excess {excess:e} over {allowed:e}");
        }
    }

    #[test]
    fn closed_form_matches_iterative(
        n in 1usize..=5,
        entries in prop::collection::vec(-1.5f64..1.5, 36),
        shift in 0.0f64..1.0,
        rho in 0.05f64..3.0,
        base in prop::collection::vec(-5.0f64..5.0, 5),
    ) {
        let q = psd(n, &entries, shift);
        let c = Vector::from_fn(n, |i, _| entries[25 + i]);
        let base = Vector::from_row_slice(&base[..n]);
        let exact = closed_form_quadratic_prox(&q, &c, &base, rho, &FeasibleSet::Whole, &settings()).unwrap();
        let quad = Quadratic::new(q, c, 0.0).unwrap();
        let iterative = prox_point(&quad, &base, rho, &FeasibleSet::Whole, &settings()).unwrap();
        prop_assert!((&exact - &iterative).amax() < 1e-8, "{exact} vs {iterative}");
    }

    #[test]
    fn one_dimensional_prox_matches_golden_section(
        family in 0u8..3,
        a in 0.05f64..2.0,
        b in -2.0f64..2.0,
        rho in 0.05f64..3.0,
        center in -4.0f64..4.0,
        lo in -3.0f64..0.0,
        width in 0.5f64..5.0,
    ) {
        let f: Box<dyn ConvexFn> = match family {
            0 => Box::new(Quadratic::new(Matrix::from_element(1, 1, a), Vector::from_element(1, b), 0.0).unwrap()),
            1 => Box::new(L1Norm { dim: 1, scale: a }),
            _ => Box::new(quartic(1, vec![a], 0.0)),
        };
        let hi = lo + width;
        let set = FeasibleSet::interval(lo, hi);
        let got = prox_point(f.as_ref(), &Vector::from_element(1, center), rho, &set, &settings()).unwrap()[0];
        let phi = |z: f64| f.value(&Vector::from_element(1, z)) + (z - center).powi(2) / (2.0 * rho);
        let want = golden_section(phi, lo, hi, 1e-10);
        prop_assert!((got - want).abs() < 1e-6, "prox {got} vs golden {want}");
    }
}

/// Minimiser of a unimodal function on `[lo, hi]`.
fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn worked_prox_examples() {
    let s = settings();
    let zbar = Vector::from_vec(vec![0.3, -1.0]);
    let zero = npcpm::problem::Zero { dim: 2 };
    assert_eq!(prox_point(&zero, &zbar, 0.7, &FeasibleSet::Whole, &s).unwrap(), zbar);

    let c = Vector::from_vec(vec![1.0, -2.0]);
    let lin = Quadratic::linear(c.clone(), 0.0);
    let p = prox_point(&lin, &zbar, 0.5, &FeasibleSet::Whole, &s).unwrap();
    assert!((p - (&zbar - c * 0.5)).amax() < 1e-9);

    let l1 = L1Norm { dim: 1, scale: 1.0 };
    let p = prox_point(&l1, &Vector::from_element(1, 0.3), 1.0, &FeasibleSet::Whole, &s).unwrap();
    assert!(p[0].abs() < 1e-12);
}
