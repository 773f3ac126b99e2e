mod common;

use nalgebra::DVector;
use siascor::qp::{solve_qp, QpProblem, QpSolver, QpStatus};

#[test]
fn random_instances_match_dual_gradient_reference() {
    for seed in 0..40u64 {
        let p = 1 + (seed as usize % 8);
        let m = 1 + (seed as usize * 7 % 12);
        let (a, y, g, h) = common::random_feasible_qp(seed, p, m);
        let sol = solve_qp(
            &QpProblem {
                a: a.clone(),
                y: y.clone(),
                g: g.clone(),
                h: h.clone(),
                eps_reg: Some(0.0),
            },
            1e-10,
            1000,
        )
        .unwrap();
        assert_eq!(sol.status, QpStatus::Optimal, "seed {seed}");
        assert!(sol.kkt.max() <= 1e-8, "seed {seed}: {:?}", sol.kkt);
        let (lower, _) = common::dual_projected_gradient(&a, &y, &g, &h, 0.0, 20_000);
        let rel = (sol.objective - lower).abs() / (1.0 + sol.objective.abs());
        assert!(rel <= 1e-6, "seed {seed}: {} vs {lower}", sol.objective);
    }
}

#[test]
fn objective_never_below_unconstrained() {
    for seed in 100..130u64 {
        let (a, y, g, h) = common::random_feasible_qp(seed, 5, 10);
        let free = solve_qp(
            &QpProblem {
                a: a.clone(),
                y: y.clone(),
                g: g.rows(0, 0).into_owned(),
                h: DVector::zeros(0),
                eps_reg: None,
            },
            1e-10,
            100,
        )
        .unwrap();
        let cons = solve_qp(&QpProblem { a, y, g, h, eps_reg: None }, 1e-10, 1000).unwrap();
        assert!(cons.objective >= free.objective - 1e-10);
    }
}

#[test]
fn incremental_rows_reproduce_batch_solution() {
    for seed in 200..230u64 {
        let (a, y, g, h) = common::random_feasible_qp(seed, 6, 12);
        let batch = solve_qp(
            &QpProblem {
                a: a.clone(),
                y: y.clone(),
                g: g.clone(),
                h: h.clone(),
                eps_reg: Some(0.0),
            },
            1e-10,
            1000,
        )
        .unwrap();
        let mut s = QpSolver::new(&a, &y, Some(0.0)).unwrap();
        let mut last = f64::NEG_INFINITY;
        for i in 0..g.nrows() {
            let row: Vec<f64> = g.row(i).iter().copied().collect();
            s.add_constraint(&row, h[i]).unwrap();
            let sol = s.solve(1e-10, 1000);
            assert_eq!(sol.status, QpStatus::Optimal);
            assert!(sol.objective >= last - 1e-10, "objective decreased");
            last = sol.objective;
        }
        assert!((last - batch.objective).abs() <= 1e-9 * (1.0 + last));
    }
}
