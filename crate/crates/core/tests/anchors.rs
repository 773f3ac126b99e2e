mod common;

use common::brute_force_anchors;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siascor::domain::{Dataset, InputBox, InputTransform};
use siascor::fidelity::{select_anchors, InspectionGrid, Scaling};
use siascor::model::{PolynomialModel, TrainedModel};

#[test]
fn select_anchors_matches_brute_force() {
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=4);
        let lower: Vec<f64> = (0..d).map(|_| rng.random_range(-5.0..5.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.5..50.0)).collect();
        let b = InputBox::unnamed(lower.clone(), upper.clone()).unwrap();
        let degree = rng.random_range(0..=3);
        let tr = InputTransform::identity(b.clone());
        let p = siascor::polybasis::MonomialBasis::new(d, degree).unwrap().len();
        let coeffs = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = TrainedModel::Polynomial(PolynomialModel::from_coefficients(tr, degree, coeffs).unwrap());
        let n = rng.random_range(1..40);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|k| rng.random_range(lower[k]..=upper[k])).collect())
            .collect();
        let ys = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let data = Dataset::new(xs, ys, b.clone(), "y").unwrap();

        // every fifth instance is built to have exact ties
        let grid = if seed % 5 == 0 {
            let mut pts: Vec<Vec<f64>> = (0..rng.random_range(1..20))
                .map(|_| (0..d).map(|k| rng.random_range(lower[k]..=upper[k])).collect())
                .collect();
            let copies: Vec<Vec<f64>> = pts.iter().rev().cloned().collect();
            pts.extend(copies);
            InspectionGrid::from_points(pts).unwrap()
        } else {
            let per = ((10_000f64).powf(1.0 / d as f64).floor() as usize).min(rng.random_range(1..30));
            InspectionGrid::new(&b, per).unwrap()
        };
        assert!(grid.len() <= 10_000);
        for scaling in [Scaling::Raw, Scaling::Unit] {
            let got = select_anchors(&model, &data, &grid, scaling).unwrap();
            let (k_min, k_max) = brute_force_anchors(&model, &data, grid.points(), scaling);
            assert_eq!((got.k_min, got.k_max), (k_min, k_max), "seed {seed} {scaling:?}");
            assert_eq!(got.x_min, grid.points()[k_min]);
            assert_eq!(got.x_max, grid.points()[k_max]);
        }
    }
}

#[test]
fn constant_model_and_symmetric_data_tie_to_the_first_index() {
    let b = InputBox::unit(1);
    let model = TrainedModel::Polynomial(
        PolynomialModel::from_coefficients(InputTransform::identity(b.clone()), 0, vec![0.0]).unwrap(),
    );
    let data = Dataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 0.0], b, "y").unwrap();
    let grid = InspectionGrid::from_points(vec![vec![0.0], vec![1.0], vec![0.5], vec![0.25], vec![0.75]]).unwrap();
    let got = select_anchors(&model, &data, &grid, Scaling::Raw).unwrap();
    // ends: 1 + 0, middle: 0.5 + 0.5, quarter points: 0.25 + 0.75
    assert_eq!((got.k_min, got.k_max), (0, 0));
}
