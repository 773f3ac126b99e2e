//! Synthetic brushing-like data.
//!
//! The ground truth `brush-surrogate-v1` is defined on the transformed
//! coordinates of the brushing box (sqrt then unit scaling):
//!
//! ```text
//! f(z) = 0.15 + 0.015 z_dia
//!      + 0.08 exp(-3 z_tc) (0.7 + 0.3 z_ae^2)
//!      + 0.03 (z_nb - 0.6)^2 + 0.03 (z_nw - 0.65)^2
//! ```
//!
//! It lies in about `[0.153, 0.269]`, increases in `dia`, decreases convexly
//! in `t_c`, is convex in `a_e`, `n_b`, `n_w` and meets the `r = 1/2` rebound
//! condition in `n_b` and `n_w`. Boxes over a subset of the five names use
//! fixed values for the missing coordinates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::constraints::{expert_constraint_set, ShapeConstraintSet};
use crate::domain::{Dataset, InputBox, InputTransform, TransformKind};
use crate::lowdisc::SobolPoints;
use crate::violation::{certify_field, CertificationReport, CertifyConfig, Surface, SurfaceField};

pub const GROUND_TRUTH_ID: &str = "brush-surrogate-v1";

const NAMES: [&str; 5] = ["dia", "t_c", "n_b", "n_w", "a_e"];
const FIXED: [f64; 5] = [0.5, 0.5, 0.6, 0.65, 0.5];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SyntheticError {
    #[error("unknown ground truth `{0}`")]
    UnknownTruth(String),
    #[error("dimension `{0}` is not one of dia, t_c, n_b, n_w, a_e")]
    UnknownDim(String),
    #[error("noise level must be finite and >= 0, got {0}")]
    BadNoise(f64),
    #[error("need at least one point")]
    NoPoints,
    #[error("ground truth fails certification: {0}")]
    NotCertified(String),
    #[error(transparent)]
    Data(#[from] crate::domain::DataError),
}

/// The ground truth restricted to a box whose dimensions are a subset of the
/// brushing names; evaluated in that box's transformed coordinates.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    slots: Vec<usize>,
}

impl GroundTruth {
    pub fn for_box(input_box: &InputBox) -> Result<Self, SyntheticError> {
        let slots = input_box
            .names()
            .iter()
            .map(|n| {
                NAMES
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| SyntheticError::UnknownDim(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(GroundTruth { slots })
    }

    fn full(&self, z: &[f64]) -> [f64; 5] {
        let mut v = FIXED;
        for (&s, &x) in self.slots.iter().zip(z) {
            v[s] = x;
        }
        v
    }

    fn slot(&self, i: usize) -> usize {
        self.slots[i]
    }
}

fn f5(v: &[f64; 5]) -> f64 {
    let [dia, tc, nb, nw, ae] = *v;
    0.15 + 0.015 * dia
        + 0.08 * (-3.0 * tc).exp() * (0.7 + 0.3 * ae * ae)
        + 0.03 * (nb - 0.6).powi(2)
        + 0.03 * (nw - 0.65).powi(2)
}

impl Surface for GroundTruth {
    fn dim(&self) -> usize {
        self.slots.len()
    }

    fn value(&self, z: &[f64]) -> f64 {
        f5(&self.full(z))
    }

    fn partial(&self, z: &[f64], i: usize) -> f64 {
        let [_, tc, nb, nw, ae] = self.full(z);
        let e = 0.08 * (-3.0 * tc).exp();
        match self.slot(i) {
            0 => 0.015,
            1 => -3.0 * e * (0.7 + 0.3 * ae * ae),
            2 => 0.06 * (nb - 0.6),
            3 => 0.06 * (nw - 0.65),
            _ => e * 0.6 * ae,
        }
    }

    fn second_partial(&self, z: &[f64], i: usize) -> f64 {
        let [_, tc, _, _, ae] = self.full(z);
        let e = 0.08 * (-3.0 * tc).exp();
        match self.slot(i) {
            0 => 0.0,
            1 => 9.0 * e * (0.7 + 0.3 * ae * ae),
            2 | 3 => 0.06,
            _ => e * 0.6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(rename = "box")]
    pub input_box: InputBox,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub truth: String,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            input_box: InputBox::brushing(),
            n: 125,
            sigma: 0.01,
            seed: 0,
            truth: GROUND_TRUTH_ID.to_string(),
        }
    }
}

impl SyntheticSpec {
    /// Three-dimensional variant over `dia, t_c, n_b`.
    pub fn reduced(n: usize, seed: u64) -> Self {
        SyntheticSpec {
            input_box: InputBox::brushing()
                .select(&["dia", "t_c", "n_b"])
                .expect("names exist"),
            n,
            seed,
            ..SyntheticSpec::default()
        }
    }

    pub fn transform(&self) -> InputTransform {
        InputTransform::new(TransformKind::SqrtThenUnitScale, self.input_box.clone())
            .expect("brushing boxes are non-negative")
    }

    /// The expert constraints restricted to this spec's dimensions.
    pub fn constraints(&self) -> ShapeConstraintSet {
        expert_constraint_set()
            .restrict(&InputBox::brushing(), &self.input_box)
            .expect("restriction of a consistent set")
    }
}

/// Certifies the ground truth against the (restricted) expert constraints.
pub fn certify_ground_truth(spec: &SyntheticSpec, n_points: usize) -> Result<CertificationReport, SyntheticError> {
    if spec.truth != GROUND_TRUTH_ID {
        return Err(SyntheticError::UnknownTruth(spec.truth.clone()));
    }
    let truth = GroundTruth::for_box(&spec.input_box)?;
    let set = spec.constraints();
    let field = SurfaceField::new(&truth, &set);
    let cfg = CertifyConfig {
        n_points,
        refine_from: 20,
        refine_steps: 50,
        eps_feas: 0.0,
        seed: spec.seed,
        ..CertifyConfig::default()
    };
    Ok(certify_field(&field, &set, spec.input_box.names(), &cfg))
}

/// `n` low-discrepancy inputs with `y = f(z) + N(0, sigma^2)`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset, SyntheticError> {
    if !(spec.sigma.is_finite() && spec.sigma >= 0.0) {
        return Err(SyntheticError::BadNoise(spec.sigma));
    }
    if spec.n == 0 {
        return Err(SyntheticError::NoPoints);
    }
    let report = certify_ground_truth(spec, 1 << 14)?;
    if !report.pass {
        let worst: Vec<String> = report
            .failing()
            .map(|f| format!("{} {:?}: {:e}", f.constraint.kind, f.constraint.dim, f.max_violation))
            .collect();
        return Err(SyntheticError::NotCertified(worst.join("; ")));
    }
    let truth = GroundTruth::for_box(&spec.input_box)?;
    let transform = spec.transform();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.sigma.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut xs = Vec::with_capacity(spec.n);
    let mut ys = Vec::with_capacity(spec.n);
    for z in SobolPoints::new(spec.input_box.dim(), spec.seed).take(spec.n) {
        let x = transform.inverse(&z);
        let e = if spec.sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        ys.push(truth.value(&transform.forward(&x)) + e);
        xs.push(x);
    }
    Ok(Dataset::new(xs, ys, spec.input_box.clone(), "R_a")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_points_lie_on_the_surface() {
        let spec = SyntheticSpec {
            sigma: 0.0,
            n: 40,
            ..SyntheticSpec::default()
        };
        let d = generate_synthetic(&spec).unwrap();
        let truth = GroundTruth::for_box(&spec.input_box).unwrap();
        let t = spec.transform();
        for (x, y) in d.inputs().iter().zip(d.outputs()) {
            assert_eq!(*y, truth.value(&t.forward(x)));
        }
    }

    #[test]
    fn default_spec_is_deterministic_and_in_range() {
        let spec = SyntheticSpec::default();
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a.len(), 125);
        assert_eq!(a, generate_synthetic(&spec).unwrap());
        assert!(a.outputs().iter().all(|y| (0.1 - 0.04..=0.5 + 0.04).contains(y)));
        let other = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn reduced_variant_uses_three_dims() {
        let spec = SyntheticSpec::reduced(60, 2);
        let d = generate_synthetic(&spec).unwrap();
        assert_eq!(d.dim(), 3);
        assert_eq!(spec.constraints().len(), 7);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let truth = GroundTruth::for_box(&InputBox::brushing()).unwrap();
        let h = 1e-5;
        for z in SobolPoints::new(5, 3).take(50) {
            let z: Vec<f64> = z.iter().map(|v| v.clamp(2e-5, 1.0 - 2e-5)).collect();
            for i in 0..5 {
                let mut a = z.clone();
                let mut b = z.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (truth.value(&a) - truth.value(&b)) / (2.0 * h);
                assert!((fd - truth.partial(&z, i)).abs() < 1e-8);
                let fd2 = (truth.partial(&a, i) - truth.partial(&b, i)) / (2.0 * h);
                assert!((fd2 - truth.second_partial(&z, i)).abs() < 1e-6);
            }
        }
    }
}
