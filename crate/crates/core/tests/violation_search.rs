mod common;

use std::sync::Arc;

use common::{scan_min, OraclePoly};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siascor::constraints::{ShapeConstraint, ShapeConstraintSet};
use siascor::polybasis::{MonomialBasis, Polynomial};
use siascor::violation::{coordinate_sweep, find_max_violation, PolynomialField, SearchBudget, ViolationField, ViolationPoint};

fn square() -> Polynomial {
    let basis = Arc::new(MonomialBasis::new(1, 2).unwrap());
    let mut w = vec![0.0; basis.len()];
    let k = (0..basis.len()).find(|&k| basis.exponents(k) == [2]).unwrap();
    w[k] = 1.0;
    Polynomial::new(basis, w).unwrap()
}

#[test]
fn square_against_monotonicity() {
    let model = square();
    let worst = |c: ShapeConstraint| {
        let set = ShapeConstraintSet::new(1, vec![c]).unwrap();
        let field = PolynomialField::new(&model, &set).unwrap();
        find_max_violation(&field, 0, &SearchBudget::default(), 0)
    };
    let inc = worst(ShapeConstraint::MonotoneIncreasing(0));
    assert!(inc.value.abs() <= 1e-12 && inc.point[0] <= 1e-12, "{inc:?}");
    let dec = worst(ShapeConstraint::MonotoneDecreasing(0));
    assert!((dec.value - 2.0).abs() <= 1e-12 && (dec.point[0] - 1.0).abs() <= 1e-12, "{dec:?}");
}

#[test]
fn random_quartic_reaches_dense_scan_maximum() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = Arc::new(MonomialBasis::new(2, 4).unwrap());
        let w: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = OraclePoly::from_basis(&basis, &w);
        let model = Polynomial::new(basis, w).unwrap();
        let i = rng.random_range(0..2);
        let (con, order, sign) = match seed % 3 {
            0 => (ShapeConstraint::MonotoneIncreasing(i), 1, -1.0),
            1 => (ShapeConstraint::Concave(i), 2, 1.0),
            _ => (ShapeConstraint::UpperBound(0.0), 0, 1.0),
        };
        let set = ShapeConstraintSet::new(2, vec![con]).unwrap();
        let field = PolynomialField::new(&model, &set).unwrap();
        let found = find_max_violation(&field, 0, &SearchBudget::default(), seed);

        let n = 1000;
        let mut dense = f64::NEG_INFINITY;
        for a in 0..n {
            for b in 0..n {
                let z = [a as f64 / (n - 1) as f64, b as f64 / (n - 1) as f64];
                dense = dense.max(sign * oracle.eval_d(&z, i, order));
            }
        }
        assert!(found.value >= dense - 1e-3 * dense.abs(), "seed {seed}: found {} dense {dense}", found.value);
        let at = sign * oracle.eval_d(&found.point, i, order);
        assert!((at - found.value).abs() <= 1e-9 * (1.0 + at.abs()), "seed {seed}");
    }
}

#[test]
fn coordinate_sweep_beats_the_first_axis_line_maximum() {
    for seed in 0..40 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=4);
        let basis = Arc::new(MonomialBasis::new(d, 4).unwrap());
        let w: Vec<f64> = (0..basis.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let oracle = OraclePoly::from_basis(&basis, &w);
        let model = Polynomial::new(basis, w).unwrap();
        let set = ShapeConstraintSet::new(d, vec![ShapeConstraint::UpperBound(0.0)]).unwrap();
        let field = PolynomialField::new(&model, &set).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..=1.0)).collect();
        let start = ViolationPoint {
            value: field.value(0, &x),
            point: x.clone(),
        };
        let got = coordinate_sweep(&field, 0, &start, 5, 33);
        let line = -scan_min(
            |t| {
                let mut z = x.clone();
                z[0] = t;
                -oracle.eval(&z)
            },
            10_000,
        );
        assert!(got.value >= line - 1e-9, "seed {seed}: {} < {line}", got.value);
        assert!((oracle.eval(&got.point) - got.value).abs() <= 1e-12);
        assert!(got.point.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
