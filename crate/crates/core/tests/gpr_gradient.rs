use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use siascor::gpr::{kernel, log_marginal_likelihood, GprHyperparams};

fn from_log(theta: &[f64]) -> GprHyperparams {
    let d = theta.len() - 1;
    GprHyperparams {
        length_scales: theta[..d].iter().map(|t| t.exp()).collect(),
        noise: theta[d].exp(),
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = rng.random_range(1..=5);
        let n = rng.random_range(5..30);
        let z: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut theta: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.0)).collect();
        theta.push(rng.random_range(-5.0..-1.0));

        let (_, grad) = log_marginal_likelihood(&z, &y, &from_log(&theta)).unwrap();
        let h = 1e-5;
        let fd: Vec<f64> = (0..=d)
            .map(|k| {
                let mut up = theta.clone();
                let mut dn = theta.clone();
                up[k] += h;
                dn[k] -= h;
                let lu = log_marginal_likelihood(&z, &y, &from_log(&up)).unwrap().0;
                let ld = log_marginal_likelihood(&z, &y, &from_log(&dn)).unwrap().0;
                (lu - ld) / (2.0 * h)
            })
            .collect();
        let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-8);
        for k in 0..=d {
            let rel = (grad[k] - fd[k]).abs() / scale;
            assert!(rel <= 1e-5, "seed {seed} k {k}: analytic {} fd {} rel {rel:e}", grad[k], fd[k]);
        }
    }
}

proptest! {
    #[test]
    fn kernel_on_the_diagonal_is_one_plus_noise(
        x in proptest::collection::vec(-10.0f64..10.0, 1..6),
        ls in 1e-3f64..1e3,
        noise in 0.0f64..1.0,
    ) {
        let hp = GprHyperparams { length_scales: vec![ls; x.len()], noise };
        prop_assert_eq!(kernel(&x, &x, &hp), 1.0 + noise);
    }
}
