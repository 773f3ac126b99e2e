//! Seeded low-discrepancy point sets on the unit hypercube.
//!
//! Backed by the `sobol` crate (Joe-Kuo direction numbers) with a seeded
//! Cranley-Patterson rotation, so different seeds give different but
//! equally well spread point sets.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sobol::params::JoeKuoD6;
use sobol::Sobol;

fn params() -> &'static JoeKuoD6 {
    static PARAMS: OnceLock<JoeKuoD6> = OnceLock::new();
    PARAMS.get_or_init(JoeKuoD6::minimal)
}

/// Iterator over shifted Sobol points in `[0, 1)^dim`.
pub struct SobolPoints {
    inner: Sobol<f64>,
    shift: Vec<f64>,
}

impl SobolPoints {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_50b0_1000_0000);
        let shift = (0..dim).map(|_| rng.random::<f64>()).collect();
        SobolPoints {
            inner: Sobol::new(dim, params()),
            shift,
        }
    }
}

impl Iterator for SobolPoints {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        let mut p = self.inner.next()?;
        for (v, s) in p.iter_mut().zip(&self.shift) {
            *v += s;
            if *v >= 1.0 {
                *v -= 1.0;
            }
        }
        Some(p)
    }
}

/// `n` points, flattened row-major into a `n x dim` buffer.
pub fn sobol_flat(dim: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * dim);
    for p in SobolPoints::new(dim, seed).take(n) {
        out.extend_from_slice(&p);
    }
    out
}

/// All `2^dim` vertices of the unit hypercube.
pub fn unit_corners(dim: usize) -> Vec<Vec<f64>> {
    (0..1usize << dim)
        .map(|mask| (0..dim).map(|i| ((mask >> i) & 1) as f64).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn points_stay_in_unit_cube_and_are_seeded() {
        let a = sobol_flat(5, 1000, 7);
        assert!(a.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert_eq!(a, sobol_flat(5, 1000, 7));
        assert_ne!(a, sobol_flat(5, 1000, 8));
    }

    #[test]
    fn one_dimensional_points_fill_the_interval() {
        let pts = sobol_flat(1, 1024, 3);
        let mut sorted = pts.clone();
        sorted.sort_by(f64::total_cmp);
        let max_gap = sorted.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        assert!(max_gap <= 1.0 / 1024.0 + 1e-12, "gap {max_gap}");
    }

    #[test]
    fn corners_enumerate_all_vertices() {
        let c = unit_corners(3);
        assert_eq!(c.len(), 8);
        assert!(c.contains(&vec![0.0, 0.0, 0.0]));
        assert!(c.contains(&vec![1.0, 1.0, 1.0]));
    }
}
