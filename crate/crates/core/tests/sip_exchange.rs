mod common;

use std::time::Instant;

use common::{dense_grid_qp_1d, random_instance_1d, scan_min, to_constraint, OraclePoly};
use nalgebra::{DMatrix, DVector};
use siascor::constraints::{ShapeConstraint, ShapeConstraintSet};
use siascor::domain::{Dataset, InputBox, TransformKind};
use siascor::sip::{train_siascor, unconstrained_fit, SipConfig};

fn cfg_1d() -> SipConfig {
    SipConfig {
        transform: TransformKind::Identity,
        ..SipConfig::default()
    }
}

fn instance(seed: u64) -> (common::Instance1d, Dataset, ShapeConstraintSet, DMatrix<f64>, DVector<f64>) {
    let inst = random_instance_1d(seed);
    let data = Dataset::new(inst.xs.iter().map(|&x| vec![x]).collect(), inst.ys.clone(), InputBox::unit(1), "y").unwrap();
    let set = ShapeConstraintSet::new(1, inst.fams.iter().map(|&f| to_constraint(f)).collect()).unwrap();
    let a = DMatrix::from_fn(inst.xs.len(), inst.degree + 1, |r, k| inst.xs[r].powi(k as i32));
    let y = DVector::from_column_slice(&inst.ys);
    (inst, data, set, a, y)
}

#[test]
fn exchange_loop_matches_dense_grid_qp() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..25 {
        let (inst, data, set, a, y) = instance(seed);
        let cfg = SipConfig {
            degree: inst.degree,
            delta: 0.0,
            ..cfg_1d()
        };
        let out = train_siascor(&data, &set, &cfg, |_| {}).unwrap();
        assert!(out.converged, "seed {seed}");
        let dense = dense_grid_qp_1d(&a, &y, &inst.fams, inst.degree, 10_000, 0.0);
        let rel = (out.objective - dense.objective).abs() / dense.objective;
        worst = worst.max(rel);
        assert!(rel <= 1e-4, "seed {seed}: exchange {} vs dense {} ({:?})", out.objective, dense.objective, inst.fams);
    }
    eprintln!("worst relative gap {worst:e} in {:?}", start.elapsed());
}

#[test]
fn tightened_objective_lies_between_the_dense_references() {
    for seed in 0..25 {
        let (inst, data, set, a, y) = instance(seed);
        let cfg = SipConfig {
            degree: inst.degree,
            ..cfg_1d()
        };
        let out = train_siascor(&data, &set, &cfg, |_| {}).unwrap();
        assert!(out.certified(), "seed {seed}");
        let loose = dense_grid_qp_1d(&a, &y, &inst.fams, inst.degree, 10_000, 0.0).objective;
        let tight = dense_grid_qp_1d(&a, &y, &inst.fams, inst.degree, 10_000, cfg.delta).objective;
        assert!(
            out.objective >= loose * (1.0 - 1e-5) && out.objective <= tight * (1.0 + 1e-5),
            "seed {seed}: {loose} <= {} <= {tight}",
            out.objective
        );
    }
}

#[test]
fn rebound_limits_the_rise_after_a_dip() {
    // Falls from 0.4 to about 0.1 near x = 0.6, then climbs back to ~0.38.
    let xs: Vec<f64> = (0..41).map(|i| i as f64 / 40.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.1 + 0.8 * (x - 0.6f64).powi(2) + 0.1 * (x - 0.6)).collect();
    let data = Dataset::new(xs.iter().map(|&x| vec![x]).collect(), ys, InputBox::unit(1), "y").unwrap();
    let r = 0.5;
    let min_form = |p: &OraclePoly| {
        let f = |t: f64| p.eval(&[t]);
        let fstar = scan_min(f, 10_000);
        (f(1.0) - fstar) - r * (f(0.0) - fstar)
    };
    let free = unconstrained_fit(&data, 4, TransformKind::Identity, None).unwrap();
    let free_p = OraclePoly::from_basis(free.polynomial().basis(), free.coefficients());
    assert!(min_form(&free_p) > 0.05, "test data should rebound strongly");

    let set = ShapeConstraintSet::new(1, vec![ShapeConstraint::Rebound { dim: 0, r }]).unwrap();
    let out = train_siascor(&data, &set, &SipConfig { degree: 4, ..cfg_1d() }, |_| {}).unwrap();
    assert!(out.certified());
    let p = OraclePoly::from_basis(out.model.polynomial().basis(), out.model.coefficients());
    assert!(min_form(&p) <= 1e-6, "{}", min_form(&p));
}

#[test]
fn two_dim_training_is_deterministic_and_sound() {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..8 {
        for j in 0..8 {
            let (a, b) = (i as f64 / 7.0, j as f64 / 7.0);
            xs.push(vec![a, b]);
            ys.push((3.0 * a).sin() * 0.2 + 0.1 * (b - 0.5).powi(2) - 0.05 * b + 0.01 * ((i * 7 + j * 3) % 5) as f64);
        }
    }
    let data = Dataset::new(xs, ys, InputBox::unit(2), "y").unwrap();
    let set = ShapeConstraintSet::new(
        2,
        vec![
            ShapeConstraint::MonotoneIncreasing(0),
            ShapeConstraint::Convex(1),
            ShapeConstraint::Rebound { dim: 1, r: 0.3 },
            ShapeConstraint::UpperBound(0.2),
        ],
    )
    .unwrap();
    let cfg = SipConfig {
        degree: 3,
        certify_points: 100_000,
        ..cfg_1d()
    };
    let a = train_siascor(&data, &set, &cfg, |_| {}).unwrap();
    let b = train_siascor(&data, &set, &cfg, |_| {}).unwrap();
    assert!(a.certified());
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.coefficients(), b.model.coefficients());
    for w in a.log.windows(2) {
        assert!(w[1].objective >= w[0].objective * (1.0 - 1e-12));
        assert!(w[1].n_constraints >= w[0].n_constraints);
    }

    // A ten times larger scan with another seed finds nothing above eps_feas.
    let recheck = siascor::violation::CertifyConfig {
        n_points: 1_000_000,
        eps_feas: cfg.eps_feas,
        seed: 99,
        ..Default::default()
    };
    let m = siascor::model::TrainedModel::Polynomial(a.model.clone());
    let report = siascor::sip::certify_model(&m, &set, &recheck).unwrap();
    assert!(report.pass, "{:?}", report.max_violation());

    // Oracle check on a dense grid with independent evaluation.
    let p = OraclePoly::from_basis(a.model.polynomial().basis(), a.model.coefficients());
    let n = 300;
    for i in 0..=n {
        for j in 0..=n {
            let z = [i as f64 / n as f64, j as f64 / n as f64];
            assert!(-p.eval_d(&z, 0, 1) <= 1e-6);
            assert!(-p.eval_d(&z, 1, 2) <= 1e-6);
            assert!(p.eval(&z) - 0.2 <= 1e-6);
        }
    }
}
