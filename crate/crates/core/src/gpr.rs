//! Gaussian process regression with an anisotropic Matern-3/2 kernel plus
//! white noise:
//!
//! `k(z, z') = (1 + sqrt(3) s) exp(-sqrt(3) s) + n [z = z']`,
//! `s = ||(z - z') / l||_2`.
//!
//! The amplitude is fixed at one. Hyperparameters `(l, n)` maximize the log
//! marginal likelihood, optimized in log space by projected gradient ascent
//! from several starts.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, InputTransform};
use crate::violation::Surface;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GprError {
    #[error("need at least 2 training points, got {0}")]
    TooFewPoints(usize),
    #[error("kernel matrix not positive definite even with jitter {0:e}")]
    NotPositiveDefinite(f64),
    #[error("all {0} optimizer starts failed")]
    AllStartsFailed(usize),
    #[error("invalid hyperparameters: {0}")]
    BadHyperparams(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprHyperparams {
    pub length_scales: Vec<f64>,
    pub noise: f64,
}

impl GprHyperparams {
    fn from_log(theta: &[f64]) -> Self {
        let d = theta.len() - 1;
        GprHyperparams {
            length_scales: theta[..d].iter().map(|t| t.exp()).collect(),
            noise: theta[d].exp(),
        }
    }

    fn validate(&self, d: usize) -> Result<(), GprError> {
        if self.length_scales.len() != d {
            return Err(GprError::BadHyperparams(format!(
                "{} length scales for {d} dimensions",
                self.length_scales.len()
            )));
        }
        if self.length_scales.iter().any(|l| !(l.is_finite() && *l > 0.0)) || !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(GprError::BadHyperparams(format!("{self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GprConfig {
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Box for every length scale and the noise, before taking logs.
    pub lower: f64,
    pub upper: f64,
    pub center_mean: bool,
}

impl Default for GprConfig {
    fn default() -> Self {
        GprConfig {
            starts: 10,
            seed: 0,
            max_iter: 200,
            lower: 1e-3,
            upper: 1e3,
            center_mean: false,
        }
    }
}

fn scaled_distance(a: &[f64], b: &[f64], l: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(l)
        .map(|((x, y), li)| {
            let t = (x - y) / li;
            t * t
        })
        .sum::<f64>()
        .sqrt()
}

/// The Matern-3/2 part only (no noise term).
pub fn matern32(a: &[f64], b: &[f64], length_scales: &[f64]) -> f64 {
    let s = SQRT3 * scaled_distance(a, b, length_scales);
    (1.0 + s) * (-s).exp()
}

/// Full kernel including the white-noise term for identical inputs.
pub fn kernel(a: &[f64], b: &[f64], hp: &GprHyperparams) -> f64 {
    let same = if a == b { hp.noise } else { 0.0 };
    matern32(a, b, &hp.length_scales) + same
}

/// Training covariance: noise on the diagonal (one entry per observation).
fn train_covariance(z: &[Vec<f64>], hp: &GprHyperparams) -> DMatrix<f64> {
    let n = z.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0 + hp.noise;
        for j in 0..i {
            let v = matern32(&z[i], &z[j], &hp.length_scales);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

fn factor(mut k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), GprError> {
    let n = k.nrows();
    let mut jitter = JITTER_START;
    for i in 0..n {
        k[(i, i)] += jitter;
    }
    loop {
        if let Some(c) = Cholesky::new(k.clone()) {
            return Ok((c, jitter));
        }
        if jitter >= JITTER_MAX {
            return Err(GprError::NotPositiveDefinite(jitter));
        }
        let next = (jitter * 10.0).min(JITTER_MAX);
        for i in 0..n {
            k[(i, i)] += next - jitter;
        }
        jitter = next;
    }
}

/// Log marginal likelihood and its gradient with respect to
/// `(log l_1, ..., log l_d, log n)`.
pub fn log_marginal_likelihood(z: &[Vec<f64>], y: &[f64], hp: &GprHyperparams) -> Result<(f64, Vec<f64>), GprError> {
    let n = z.len();
    let d = hp.length_scales.len();
    let (chol, _) = factor(train_covariance(z, hp))?;
    let yv = DVector::from_column_slice(y);
    let alpha = chol.solve(&yv);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum::<f64>();
    let lml = -0.5 * yv.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // W = alpha alpha^T - K^{-1}; dLML/dtheta = 0.5 tr(W dK/dtheta)
    let mut w = chol.inverse();
    w.neg_mut();
    w.ger(1.0, &alpha, &alpha, 1.0);
    let mut grad = vec![0.0; d + 1];
    for i in 0..n {
        for j in 0..i {
            let s = SQRT3 * scaled_distance(&z[i], &z[j], &hp.length_scales);
            let e = 3.0 * (-s).exp();
            let wij = w[(i, j)];
            for (k, g) in grad.iter_mut().take(d).enumerate() {
                let t = (z[i][k] - z[j][k]) / hp.length_scales[k];
                // symmetric pair counted twice, times the 0.5 of the trace
                *g += wij * e * t * t;
            }
        }
    }
    grad[d] = 0.5 * hp.noise * w.diagonal().sum();
    Ok((lml, grad))
}

#[derive(Debug, Clone)]
pub struct GprModel {
    transform: InputTransform,
    hp: GprHyperparams,
    z: Vec<Vec<f64>>,
    y: Vec<f64>,
    mean: f64,
    alpha: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
    lml: f64,
}

/// Serialized form; the factorization is rebuilt on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprPayload {
    pub hyperparams: GprHyperparams,
    pub mean: f64,
    pub train_z: Vec<Vec<f64>>,
    pub train_y: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

impl GprModel {
    /// Conditions the prior on `(z, y)` with fixed hyperparameters.
    pub fn condition(
        transform: InputTransform,
        hp: GprHyperparams,
        z: Vec<Vec<f64>>,
        y: Vec<f64>,
        mean: f64,
    ) -> Result<Self, GprError> {
        hp.validate(transform.dim())?;
        if z.is_empty() || z.len() != y.len() {
            return Err(GprError::TooFewPoints(z.len()));
        }
        let (chol, jitter) = factor(train_covariance(&z, &hp))?;
        let centered = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean));
        let alpha = chol.solve(&centered);
        let n = y.len();
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().take(n).map(|v| v.ln()).sum::<f64>();
        let lml = -0.5 * centered.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GprModel {
            transform,
            hp,
            z,
            y,
            mean,
            alpha,
            chol,
            jitter,
            lml,
        })
    }

    pub fn from_payload(transform: InputTransform, p: GprPayload) -> Result<Self, GprError> {
        GprModel::condition(transform, p.hyperparams, p.train_z, p.train_y, p.mean)
    }

    pub fn payload(&self) -> GprPayload {
        GprPayload {
            hyperparams: self.hp.clone(),
            mean: self.mean,
            train_z: self.z.clone(),
            train_y: self.y.clone(),
            log_marginal_likelihood: self.lml,
        }
    }

    pub fn transform(&self) -> &InputTransform {
        &self.transform
    }

    pub fn hyperparams(&self) -> &GprHyperparams {
        &self.hp
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.lml
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn cross(&self, z: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.z.len(), self.z.iter().map(|zj| matern32(z, zj, &self.hp.length_scales)))
    }

    /// Mean at a transformed point.
    pub fn mean_z(&self, z: &[f64]) -> f64 {
        self.mean + self.cross(z).dot(&self.alpha)
    }

    /// Predictive mean and variance at an original-units point. The variance
    /// includes the noise term, so far from the data it tends to `1 + n`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let z = self.transform.forward(x);
        let k = self.cross(&z);
        let mean = self.mean + k.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&k)
            .unwrap_or_else(|| DVector::zeros(k.len()));
        let mut var = 1.0 + self.hp.noise - v.norm_squared();
        if var < 0.0 {
            if var < -1e-10 {
                log::warn!("negative predictive variance {var:e} clamped to 0");
            }
            var = 0.0;
        }
        (mean, var)
    }

    pub fn predict_mean(&self, x: &[f64]) -> f64 {
        self.mean_z(&self.transform.forward(x))
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<(f64, f64)> {
        xs.iter().map(|x| self.predict(x)).collect()
    }
}

impl Surface for GprModel {
    fn dim(&self) -> usize {
        self.transform.dim()
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.mean_z(z)
    }

    fn partial(&self, z: &[f64], i: usize) -> f64 {
        let l = &self.hp.length_scales;
        self.z
            .iter()
            .zip(self.alpha.iter())
            .map(|(zj, a)| {
                let s = SQRT3 * scaled_distance(z, zj, l);
                -3.0 * (-s).exp() * (z[i] - zj[i]) / (l[i] * l[i]) * a
            })
            .sum()
    }

    fn second_partial(&self, z: &[f64], i: usize) -> f64 {
        let l = &self.hp.length_scales;
        self.z
            .iter()
            .zip(self.alpha.iter())
            .map(|(zj, a)| {
                let r = scaled_distance(z, zj, l);
                let s = SQRT3 * r;
                let li2 = l[i] * l[i];
                let di = z[i] - zj[i];
                let tail = if r > 0.0 { SQRT3 * di * di / (li2 * r) } else { 0.0 };
                -3.0 / li2 * (-s).exp() * (1.0 - tail) * a
            })
            .sum()
    }
}

/// Record of one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub initial: GprHyperparams,
    pub initial_lml: f64,
    pub final_lml: f64,
    pub iterations: usize,
}

fn ascend(
    z: &[Vec<f64>],
    y: &[f64],
    theta0: Vec<f64>,
    lo: f64,
    hi: f64,
    max_iter: usize,
) -> Option<(Vec<f64>, f64, f64, usize)> {
    let eval = |t: &[f64]| log_marginal_likelihood(z, y, &GprHyperparams::from_log(t)).ok();
    let project = |t: &mut [f64]| t.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    let mut theta = theta0;
    project(&mut theta);
    let (mut f, mut g) = eval(&theta)?;
    let f0 = f;
    let mut step = 0.1 / g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let pg = theta
            .iter()
            .zip(&g)
            .map(|(t, gi)| ((t + gi).clamp(lo, hi) - t).abs())
            .fold(0.0, f64::max);
        if pg < 1e-6 {
            break;
        }
        let mut accepted = None;
        while step > 1e-14 {
            let mut cand: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t + step * gi).collect();
            project(&mut cand);
            let gain: f64 = cand.iter().zip(&theta).zip(&g).map(|((c, t), gi)| gi * (c - t)).sum();
            if gain <= 0.0 {
                break;
            }
            if let Some((fc, gc)) = eval(&cand) {
                if fc >= f + 1e-4 * gain {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            break;
        };
        // Barzilai-Borwein step for the next iteration (ascent sign).
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let yd: Vec<f64> = gc.iter().zip(&g).map(|(a, b)| b - a).collect();
        let sy: f64 = s.iter().zip(&yd).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum();
        step = if sy > 0.0 { (ss / sy).clamp(1e-6, 1e3) } else { 1.0 };
        let done = (fc - f).abs() <= 1e-12 * (1.0 + f.abs());
        theta = cand;
        f = fc;
        g = gc;
        if done {
            break;
        }
    }
    Some((theta, f0, f, it))
}

/// Fits hyperparameters by multistart marginal-likelihood ascent and
/// conditions on the data. Start 0 is `l = 0.5, n = 1e-2`; the others are
/// log-uniform in `l in [0.05, 5]`, `n in [1e-6, 1e-1]`.
pub fn fit_gpr(data: &Dataset, transform: &InputTransform, cfg: &GprConfig) -> Result<(GprModel, Vec<StartRecord>), GprError> {
    if data.len() < 2 {
        return Err(GprError::TooFewPoints(data.len()));
    }
    let d = data.dim();
    let z = transform.forward_all(data.inputs());
    let y = data.outputs();
    let mean = if cfg.center_mean {
        y.iter().sum::<f64>() / y.len() as f64
    } else {
        0.0
    };
    if y.iter().all(|v| *v == y[0]) {
        log::warn!("all training targets are identical; the fit will be noise dominated");
    }
    let yc: Vec<f64> = y.iter().map(|v| v - mean).collect();
    let (lo, hi) = (cfg.lower.ln(), cfg.upper.ln());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for s in 0..cfg.starts.max(1) {
        let theta0: Vec<f64> = if s == 0 {
            let mut t = vec![0.5f64.ln(); d];
            t.push(1e-2f64.ln());
            t
        } else {
            let mut t: Vec<f64> = (0..d).map(|_| rng.random_range(0.05f64.ln()..5.0f64.ln())).collect();
            t.push(rng.random_range(1e-6f64.ln()..1e-1f64.ln()));
            t
        };
        let initial = GprHyperparams::from_log(&theta0);
        match ascend(&z, &yc, theta0, lo, hi, cfg.max_iter) {
            Some((theta, f0, f, iterations)) => {
                records.push(StartRecord {
                    initial,
                    initial_lml: f0,
                    final_lml: f,
                    iterations,
                });
                if best.as_ref().is_none_or(|(_, bf)| f > *bf) {
                    best = Some((theta, f));
                }
            }
            None => records.push(StartRecord {
                initial,
                initial_lml: f64::NEG_INFINITY,
                final_lml: f64::NEG_INFINITY,
                iterations: 0,
            }),
        }
    }
    let (theta, _) = best.ok_or(GprError::AllStartsFailed(records.len()))?;
    let hp = GprHyperparams::from_log(&theta);
    let model = GprModel::condition(transform.clone(), hp, z, y.to_vec(), mean)?;
    Ok((model, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::InputBox;

    fn hp(l: &[f64], n: f64) -> GprHyperparams {
        GprHyperparams {
            length_scales: l.to_vec(),
            noise: n,
        }
    }

    #[test]
    fn kernel_values() {
        let h = hp(&[1.0], 0.0);
        let v = kernel(&[0.0], &[1.0], &h);
        assert!((v - (1.0 + SQRT3) * (-SQRT3).exp()).abs() < 1e-15);
        assert!((v - 0.483358).abs() < 5e-7);
        let h = hp(&[0.3, 2.0], 0.25);
        assert_eq!(kernel(&[0.2, 0.7], &[0.2, 0.7], &h), 1.25);
        let mut last = 1.0;
        for k in 1..50 {
            let v = kernel(&[0.0, 0.0], &[0.1 * k as f64, 0.0], &h);
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn single_point_posterior() {
        let t = InputTransform::identity(InputBox::unit(1));
        let m = GprModel::condition(t, hp(&[0.4], 0.5), vec![vec![0.3]], vec![2.0], 0.0).unwrap();
        let (mean, var) = m.predict(&[0.3]);
        // jitter enters the 1x1 system
        assert!((mean - 2.0 / (1.5 + JITTER_START)).abs() < 1e-15);
        assert!((var - (1.5 - 1.0 / (1.5 + JITTER_START))).abs() < 1e-12);
        let (far_mean, far_var) = m.predict(&[1e3]);
        assert!(far_mean.abs() < 1e-12 && (far_var - 1.5).abs() < 1e-12);
    }

    #[test]
    fn interpolates_with_vanishing_noise() {
        let t = InputTransform::identity(InputBox::unit(1));
        let z: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
        let y: Vec<f64> = z.iter().map(|v| (3.0 * v[0]).sin()).collect();
        let m = GprModel::condition(t, hp(&[0.5], 1e-9), z.clone(), y.clone(), 0.0).unwrap();
        for (zi, yi) in z.iter().zip(&y) {
            assert!((m.predict_mean(zi) - yi).abs() < 1e-6);
        }
    }

    #[test]
    fn mean_derivatives_match_differences() {
        let t = InputTransform::identity(InputBox::unit(2));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z: Vec<Vec<f64>> = (0..15).map(|_| vec![rng.random(), rng.random()]).collect();
        let y: Vec<f64> = z.iter().map(|v| v[0] * v[1] + 0.1 * v[0]).collect();
        let m = GprModel::condition(t, hp(&[0.4, 0.7], 1e-3), z, y, 0.0).unwrap();
        let h = 1e-5;
        for _ in 0..50 {
            let p = vec![rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)];
            for i in 0..2 {
                let mut a = p.clone();
                let mut b = p.clone();
                a[i] += h;
                b[i] -= h;
                let fd = (m.value(&a) - m.value(&b)) / (2.0 * h);
                assert!((fd - m.partial(&p, i)).abs() < 1e-6 * (1.0 + fd.abs()));
                let fd2 = (m.partial(&a, i) - m.partial(&b, i)) / (2.0 * h);
                assert!((fd2 - m.second_partial(&p, i)).abs() < 1e-4 * (1.0 + fd2.abs()));
            }
        }
    }
}
