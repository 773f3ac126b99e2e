//! Total-degree monomial bases and polynomials expressed in them.
//!
//! Monomials are ordered graded-lexicographically: by total degree first,
//! then by exponent tuple in descending lexicographic order. For `d = 2`,
//! `m = 2` this gives `1, z1, z2, z1^2, z1 z2, z2^2`. Every coefficient
//! vector in the crate refers to this order.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BasisError {
    #[error("dimension index {index} out of range for a {dim}-dimensional basis")]
    DimensionOutOfRange { index: usize, dim: usize },
    #[error("basis dimension must be at least 1")]
    ZeroDimension,
    #[error("expected {expected} coefficients, got {got}")]
    CoefficientLength { expected: usize, got: usize },
    #[error("polynomial has {poly} variables but the input transform has {transform}")]
    DimensionMismatch { poly: usize, transform: usize },
}

/// Multivariate monomials of total degree at most `degree` in `dim` variables.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "BasisShape", into = "BasisShape")]
pub struct MonomialBasis {
    dim: usize,
    degree: usize,
    /// Flat `len() x dim` exponent table.
    exponents: Vec<u32>,
    /// `(prev, var)`: monomial `k` equals monomial `prev` times `z[var]`.
    parent: Vec<(u32, u32)>,
    /// Flat `len() x dim`: index of the monomial with exponent `i` lowered by one.
    lowered: Vec<u32>,
    /// Flat `len() x dim`: index of the monomial with exponent `i` set to zero.
    stripped: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct BasisShape {
    dim: usize,
    degree: usize,
}

impl TryFrom<BasisShape> for MonomialBasis {
    type Error = BasisError;
    fn try_from(s: BasisShape) -> Result<Self, BasisError> {
        MonomialBasis::new(s.dim, s.degree)
    }
}

impl From<MonomialBasis> for BasisShape {
    fn from(b: MonomialBasis) -> Self {
        BasisShape {
            dim: b.dim,
            degree: b.degree,
        }
    }
}

impl PartialEq for MonomialBasis {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.degree == other.degree
    }
}

impl fmt::Debug for MonomialBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonomialBasis")
            .field("dim", &self.dim)
            .field("degree", &self.degree)
            .field("len", &self.len())
            .finish()
    }
}

fn compositions(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(total - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// `binomial(n, k)` for the small arguments that occur in basis sizes.
pub fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k.min(n));
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

impl MonomialBasis {
    pub fn new(dim: usize, degree: usize) -> Result<Self, BasisError> {
        if dim == 0 {
            return Err(BasisError::ZeroDimension);
        }
        let mut tuples = Vec::new();
        for deg in 0..=degree as u32 {
            compositions(deg, dim, &mut Vec::with_capacity(dim), &mut tuples);
        }
        let index: HashMap<&[u32], u32> = tuples
            .iter()
            .enumerate()
            .map(|(k, e)| (e.as_slice(), k as u32))
            .collect();

        let n = tuples.len();
        let mut parent = Vec::with_capacity(n);
        let mut lowered = vec![NONE; n * dim];
        let mut stripped = vec![0u32; n * dim];
        let mut scratch = vec![0u32; dim];
        for (k, e) in tuples.iter().enumerate() {
            match e.iter().position(|&p| p > 0) {
                Some(var) => {
                    scratch.copy_from_slice(e);
                    scratch[var] -= 1;
                    parent.push((index[scratch.as_slice()], var as u32));
                }
                None => parent.push((NONE, NONE)),
            }
            for i in 0..dim {
                scratch.copy_from_slice(e);
                if e[i] > 0 {
                    scratch[i] -= 1;
                    lowered[k * dim + i] = index[scratch.as_slice()];
                }
                scratch.copy_from_slice(e);
                scratch[i] = 0;
                stripped[k * dim + i] = index[scratch.as_slice()];
            }
        }
        let exponents = tuples.into_iter().flatten().collect();
        Ok(MonomialBasis {
            dim,
            degree,
            exponents,
            parent,
            lowered,
            stripped,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    /// Exponent tuple of monomial `k`.
    pub fn exponents(&self, k: usize) -> &[u32] {
        &self.exponents[k * self.dim..(k + 1) * self.dim]
    }

    fn check_dim(&self, i: usize) -> Result<(), BasisError> {
        if i >= self.dim {
            Err(BasisError::DimensionOutOfRange {
                index: i,
                dim: self.dim,
            })
        } else {
            Ok(())
        }
    }

    /// Writes `phi(z)` into `out` (length `len()`).
    pub fn eval_into(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.dim);
        out[0] = 1.0;
        for k in 1..self.parent.len() {
            let (prev, var) = self.parent[k];
            out[k] = out[prev as usize] * z[var as usize];
        }
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out);
        out
    }

    /// First partial derivatives of every monomial along `i`, given `phi(z)`.
    pub fn d1_from_values(&self, phi: &[f64], i: usize, out: &mut [f64]) {
        for k in 0..self.len() {
            let lo = self.lowered[k * self.dim + i];
            out[k] = if lo == NONE {
                0.0
            } else {
                f64::from(self.exponents[k * self.dim + i]) * phi[lo as usize]
            };
        }
    }

    /// Second partial derivatives of every monomial along `i`, given `phi(z)`.
    pub fn d2_from_values(&self, phi: &[f64], i: usize, out: &mut [f64]) {
        for k in 0..self.len() {
            let e = self.exponents[k * self.dim + i];
            out[k] = if e < 2 {
                0.0
            } else {
                let lo = self.lowered[k * self.dim + i] as usize;
                let lo2 = self.lowered[lo * self.dim + i] as usize;
                f64::from(e * (e - 1)) * phi[lo2]
            };
        }
    }

    pub fn eval_d1(&self, z: &[f64], i: usize) -> Result<Vec<f64>, BasisError> {
        self.check_dim(i)?;
        let phi = self.eval(z);
        let mut out = vec![0.0; self.len()];
        self.d1_from_values(&phi, i, &mut out);
        Ok(out)
    }

    pub fn eval_d2(&self, z: &[f64], i: usize) -> Result<Vec<f64>, BasisError> {
        self.check_dim(i)?;
        let phi = self.eval(z);
        let mut out = vec![0.0; self.len()];
        self.d2_from_values(&phi, i, &mut out);
        Ok(out)
    }

    /// Basis evaluated with coordinate `i` replaced by `value`.
    pub fn eval_substituted(&self, z: &[f64], i: usize, value: f64) -> Result<Vec<f64>, BasisError> {
        self.check_dim(i)?;
        let mut zz = z.to_vec();
        zz[i] = value;
        Ok(self.eval(&zz))
    }
}

/// A polynomial `w^T phi(z)` over a shared basis.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    basis: Arc<MonomialBasis>,
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(basis: Arc<MonomialBasis>, coeffs: Vec<f64>) -> Result<Self, BasisError> {
        if coeffs.len() != basis.len() {
            return Err(BasisError::CoefficientLength {
                expected: basis.len(),
                got: coeffs.len(),
            });
        }
        Ok(Polynomial { basis, coeffs })
    }

    pub fn zero(basis: Arc<MonomialBasis>) -> Self {
        let n = basis.len();
        Polynomial {
            basis,
            coeffs: vec![0.0; n],
        }
    }

    pub fn basis(&self) -> &Arc<MonomialBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Evaluates using a caller-provided scratch buffer for `phi(z)`.
    pub fn eval_with(&self, z: &[f64], phi: &mut [f64]) -> f64 {
        self.basis.eval_into(z, phi);
        dot(&self.coeffs, phi)
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.basis.len()];
        self.eval_with(z, &mut phi)
    }

    /// `w^T phi` for an already evaluated basis vector.
    pub fn eval_values(&self, phi: &[f64]) -> f64 {
        dot(&self.coeffs, phi)
    }

    /// Exact partial derivative along `i`, expressed in the same basis.
    pub fn derivative(&self, i: usize) -> Result<Polynomial, BasisError> {
        self.basis.check_dim(i)?;
        let b = &self.basis;
        let mut out = vec![0.0; b.len()];
        for k in 0..b.len() {
            let lo = b.lowered[k * b.dim + i];
            if lo != NONE {
                out[lo as usize] += self.coeffs[k] * f64::from(b.exponents[k * b.dim + i]);
            }
        }
        Ok(Polynomial {
            basis: Arc::clone(&self.basis),
            coeffs: out,
        })
    }

    /// The polynomial with `z_i` fixed to `value`; the result no longer depends on `z_i`.
    pub fn substitute(&self, i: usize, value: f64) -> Result<Polynomial, BasisError> {
        self.basis.check_dim(i)?;
        let b = &self.basis;
        let mut out = vec![0.0; b.len()];
        for k in 0..b.len() {
            let e = b.exponents[k * b.dim + i];
            let target = b.stripped[k * b.dim + i] as usize;
            out[target] += self.coeffs[k] * value.powi(e as i32);
        }
        Ok(Polynomial {
            basis: Arc::clone(&self.basis),
            coeffs: out,
        })
    }

    /// `a * self + b * other`; both must share a basis.
    pub fn combine(&self, a: f64, other: &Polynomial, b: f64) -> Polynomial {
        debug_assert_eq!(self.basis.len(), other.basis.len());
        Polynomial {
            basis: Arc::clone(&self.basis),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn scale(&self, a: f64) -> Polynomial {
        Polynomial {
            basis: Arc::clone(&self.basis),
            coeffs: self.coeffs.iter().map(|c| a * c).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sizes_match_binomial() {
        for d in 1..=5 {
            for m in 0..=4 {
                let b = MonomialBasis::new(d, m).unwrap();
                assert_eq!(b.len(), binomial(d + m, m), "d={d} m={m}");
                assert!(b.exponents(0).iter().all(|&e| e == 0));
            }
        }
        assert_eq!(MonomialBasis::new(2, 2).unwrap().len(), 6);
    }

    #[test]
    fn graded_lex_order_is_fixed() {
        let b = MonomialBasis::new(2, 2).unwrap();
        let all: Vec<_> = (0..b.len()).map(|k| b.exponents(k).to_vec()).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 0],
                vec![1, 0],
                vec![0, 1],
                vec![2, 0],
                vec![1, 1],
                vec![0, 2]
            ]
        );
    }

    #[test]
    fn univariate_values_and_derivatives() {
        let b = MonomialBasis::new(1, 2).unwrap();
        assert_eq!(b.eval(&[0.5]), vec![1.0, 0.5, 0.25]);
        assert_eq!(b.eval_d1(&[0.5], 0).unwrap(), vec![0.0, 1.0, 1.0]);
        assert_eq!(b.eval_d2(&[0.37], 0).unwrap(), vec![0.0, 0.0, 2.0]);
        assert!(b.eval_d1(&[0.5], 1).is_err());
    }

    #[test]
    fn origin_only_keeps_constant() {
        let b = MonomialBasis::new(4, 3).unwrap();
        let phi = b.eval(&[0.0; 4]);
        assert_eq!(phi[0], 1.0);
        assert!(phi[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_basis_has_zero_curvature() {
        let b = MonomialBasis::new(3, 1).unwrap();
        for i in 0..3 {
            assert!(b.eval_d2(&[0.3, 0.9, 0.1], i).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn substitution_removes_dependence() {
        let b = Arc::new(MonomialBasis::new(2, 3).unwrap());
        let w: Vec<f64> = (0..b.len()).map(|k| (k as f64 * 0.7).sin()).collect();
        let p = Polynomial::new(b, w).unwrap();
        let s = p.substitute(1, 0.8).unwrap();
        for &t in &[0.0, 0.3, 1.0] {
            assert!((s.eval(&[0.4, t]) - p.eval(&[0.4, 0.8])).abs() < 1e-14);
        }
    }

    fn basis_and_point() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>)> {
        (1usize..=5, 1usize..=4).prop_flat_map(|(d, m)| {
            let p = binomial(d + m, m);
            (
                Just(d),
                Just(m),
                proptest::collection::vec(0.05f64..0.95, d),
                proptest::collection::vec(-1.0f64..1.0, p),
            )
        })
    }

    proptest! {
        #[test]
        fn first_derivative_matches_central_difference((d, m, z, w) in basis_and_point()) {
            let b = MonomialBasis::new(d, m).unwrap();
            let h = 1e-6;
            for i in 0..d {
                let analytic = dot(&w, &b.eval_d1(&z, i).unwrap());
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let fd = (dot(&w, &b.eval(&zp)) - dot(&w, &b.eval(&zm))) / (2.0 * h);
                prop_assert!((analytic - fd).abs() <= 1e-6, "i={} analytic={} fd={}", i, analytic, fd);
            }
        }

        #[test]
        fn second_derivative_matches_central_difference((d, m, z, w) in basis_and_point()) {
            let b = MonomialBasis::new(d, m).unwrap();
            let h = 1e-4;
            for i in 0..d {
                let analytic = dot(&w, &b.eval_d2(&z, i).unwrap());
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[i] += h;
                zm[i] -= h;
                let f0 = dot(&w, &b.eval(&z));
                let fd = (dot(&w, &b.eval(&zp)) - 2.0 * f0 + dot(&w, &b.eval(&zm))) / (h * h);
                prop_assert!((analytic - fd).abs() <= 1e-4, "i={} analytic={} fd={}", i, analytic, fd);
            }
        }

        #[test]
        fn derivative_polynomial_agrees_with_basis_derivative((d, m, z, w) in basis_and_point()) {
            let b = Arc::new(MonomialBasis::new(d, m).unwrap());
            let p = Polynomial::new(Arc::clone(&b), w.clone()).unwrap();
            for i in 0..d {
                let via_poly = p.derivative(i).unwrap().eval(&z);
                let via_basis = dot(&w, &b.eval_d1(&z, i).unwrap());
                prop_assert!((via_poly - via_basis).abs() <= 1e-12);
                let dd = p.derivative(i).unwrap().derivative(i).unwrap().eval(&z);
                prop_assert!((dd - dot(&w, &b.eval_d2(&z, i).unwrap())).abs() <= 1e-11);
            }
        }
    }
}
