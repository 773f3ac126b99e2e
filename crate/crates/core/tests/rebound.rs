mod common;

use std::sync::Arc;

use common::{scan_min, OraclePoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siascor::constraints::ShapeConstraint;
use siascor::polybasis::{MonomialBasis, Polynomial};

struct Case {
    basis: Arc<MonomialBasis>,
    w: Vec<f64>,
    dim: usize,
    r: f64,
    z: Vec<f64>,
}

fn case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(1..=2);
    let m = rng.random_range(2..=4);
    let basis = Arc::new(MonomialBasis::new(d, m).unwrap());
    let w = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dim = rng.random_range(0..d);
    let r = if rng.random_bool(0.2) { 1.0 } else { rng.random_range(0.05..1.0) };
    let z = (0..d).map(|_| rng.random_range(0.0..=1.0)).collect();
    Case { basis, w, dim, r, z }
}

#[test]
fn min_form_equals_max_of_linearized_family() {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let c = case(seed);
        let oracle = OraclePoly::from_basis(&c.basis, &c.w);
        let along = |t: f64| {
            let mut z = c.z.clone();
            z[c.dim] = t;
            z
        };
        let f = |t: f64| oracle.eval(&along(t));
        let f_star = scan_min(f, 20_000);
        let min_form = f(1.0) - f_star - c.r * (f(0.0) - f_star);

        let con = ShapeConstraint::Rebound { dim: c.dim, r: c.r };
        let row = |t: f64| con.violation(&c.w, &c.basis, &along(t)).unwrap();
        let max_lin = -scan_min(|t| -row(t), 20_000);

        let gap = (min_form - max_lin).abs();
        worst = worst.max(gap);
        assert!(gap <= 1e-8, "seed {seed}: min form {min_form} vs linearized max {max_lin}");
    }
    eprintln!("worst gap {worst:e}");
}

#[test]
fn linearized_row_matches_direct_evaluation_pointwise() {
    for seed in 100..150 {
        let c = case(seed);
        let oracle = OraclePoly::from_basis(&c.basis, &c.w);
        let con = ShapeConstraint::Rebound { dim: c.dim, r: c.r };
        let at = |t: f64| {
            let mut z = c.z.clone();
            z[c.dim] = t;
            oracle.eval(&z)
        };
        let expected = at(1.0) - c.r * at(0.0) - (1.0 - c.r) * at(c.z[c.dim]);
        let got = con.violation(&c.w, &c.basis, &c.z).unwrap();
        assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()), "seed {seed}");
    }
}

#[test]
fn violation_polynomial_agrees_with_rows() {
    for seed in 200..230 {
        let c = case(seed);
        let model = Polynomial::new(c.basis.clone(), c.w.clone()).unwrap();
        let con = ShapeConstraint::Rebound { dim: c.dim, r: c.r };
        let (poly, offset) = con.violation_polynomial(&model).unwrap();
        let row = con.violation(&c.w, &c.basis, &c.z).unwrap();
        assert!((poly.eval(&c.z) - offset - row).abs() <= 1e-12, "seed {seed}");
    }
}
