//! Global search for constraint violations over the unit box.
//!
//! A [`ViolationField`] exposes, for every constraint family of a set, the
//! violation as a function of the index point `xi in [0,1]^d`. Polynomial
//! models give polynomial fields with exact gradients; any other [`Surface`]
//! is handled through finite differences. The search is a low-discrepancy
//! scan followed by projected gradient ascent from the best scan points.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintError, ConstraintSpec, ShapeConstraint, ShapeConstraintSet};
use crate::lowdisc::{unit_corners, SobolPoints};
use crate::polybasis::{dot, MonomialBasis, Polynomial};

/// A scalar model on the transformed box with per-coordinate derivatives.
pub trait Surface {
    fn dim(&self) -> usize;
    fn value(&self, z: &[f64]) -> f64;
    fn partial(&self, z: &[f64], i: usize) -> f64;
    fn second_partial(&self, z: &[f64], i: usize) -> f64;
}

impl Surface for Polynomial {
    fn dim(&self) -> usize {
        Polynomial::dim(self)
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.eval(z)
    }

    fn partial(&self, z: &[f64], i: usize) -> f64 {
        let b = self.basis();
        let phi = b.eval(z);
        let mut d = vec![0.0; b.len()];
        b.d1_from_values(&phi, i, &mut d);
        dot(self.coeffs(), &d)
    }

    fn second_partial(&self, z: &[f64], i: usize) -> f64 {
        let b = self.basis();
        let phi = b.eval(z);
        let mut d = vec![0.0; b.len()];
        b.d2_from_values(&phi, i, &mut d);
        dot(self.coeffs(), &d)
    }
}

/// Violation of a single family evaluated directly on a surface.
pub fn surface_violation(c: &ShapeConstraint, s: &dyn Surface, xi: &[f64]) -> f64 {
    match *c {
        ShapeConstraint::UpperBound(ub) => s.value(xi) - ub,
        ShapeConstraint::LowerBound(lb) => lb - s.value(xi),
        ShapeConstraint::MonotoneIncreasing(i) => -s.partial(xi, i),
        ShapeConstraint::MonotoneDecreasing(i) => s.partial(xi, i),
        ShapeConstraint::Convex(i) => -s.second_partial(xi, i),
        ShapeConstraint::Concave(i) => s.second_partial(xi, i),
        ShapeConstraint::Rebound { dim, r } => {
            let mut p = xi.to_vec();
            p[dim] = 1.0;
            let hi = s.value(&p);
            p[dim] = 0.0;
            let lo = s.value(&p);
            hi - r * lo - (1.0 - r) * s.value(xi)
        }
    }
}

/// Violations of all families of a constraint set, as functions of `xi`.
pub trait ViolationField {
    fn dim(&self) -> usize;
    fn n_families(&self) -> usize;
    /// All family violations at `xi`.
    fn values(&self, xi: &[f64], out: &mut [f64]);
    /// Violation of family `f` and its gradient in `xi`.
    fn value_grad(&self, f: usize, xi: &[f64], grad: &mut [f64]) -> f64;
    /// Violation of family `f` alone.
    fn value(&self, f: usize, xi: &[f64]) -> f64 {
        let mut g = vec![0.0; xi.len()];
        self.value_grad(f, xi, &mut g)
    }
}

/// Exact field of a polynomial model: every family violation is itself a
/// polynomial in the same basis.
pub struct PolynomialField {
    basis: Arc<MonomialBasis>,
    families: Vec<(Vec<f64>, f64, Vec<Vec<f64>>)>,
}

impl PolynomialField {
    pub fn new(model: &Polynomial, set: &ShapeConstraintSet) -> Result<Self, ConstraintError> {
        let mut families = Vec::with_capacity(set.len());
        for c in set.constraints() {
            let (poly, offset) = c.violation_polynomial(model)?;
            let grads = (0..model.dim())
                .map(|i| poly.derivative(i).map(Polynomial::into_coeffs))
                .collect::<Result<Vec<_>, _>>()?;
            families.push((poly.into_coeffs(), offset, grads));
        }
        Ok(PolynomialField {
            basis: Arc::clone(model.basis()),
            families,
        })
    }
}

impl ViolationField for PolynomialField {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn n_families(&self) -> usize {
        self.families.len()
    }

    fn values(&self, xi: &[f64], out: &mut [f64]) {
        let phi = self.basis.eval(xi);
        for (o, (c, off, _)) in out.iter_mut().zip(&self.families) {
            *o = dot(c, &phi) - off;
        }
    }

    fn value_grad(&self, f: usize, xi: &[f64], grad: &mut [f64]) -> f64 {
        let phi = self.basis.eval(xi);
        let (c, off, grads) = &self.families[f];
        for (g, gc) in grad.iter_mut().zip(grads) {
            *g = dot(gc, &phi);
        }
        dot(c, &phi) - off
    }

    fn value(&self, f: usize, xi: &[f64]) -> f64 {
        let (c, off, _) = &self.families[f];
        dot(c, &self.basis.eval(xi)) - off
    }
}

/// Field of an arbitrary surface; gradients by central differences
/// (one-sided at the faces).
pub struct SurfaceField<'a> {
    surface: &'a dyn Surface,
    constraints: Vec<ShapeConstraint>,
}

impl<'a> SurfaceField<'a> {
    pub fn new(surface: &'a dyn Surface, set: &ShapeConstraintSet) -> Self {
        SurfaceField {
            surface,
            constraints: set.constraints().to_vec(),
        }
    }
}

const FD_STEP: f64 = 1e-6;

impl ViolationField for SurfaceField<'_> {
    fn dim(&self) -> usize {
        self.surface.dim()
    }

    fn n_families(&self) -> usize {
        self.constraints.len()
    }

    fn values(&self, xi: &[f64], out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.constraints) {
            *o = surface_violation(c, self.surface, xi);
        }
    }

    fn value_grad(&self, f: usize, xi: &[f64], grad: &mut [f64]) -> f64 {
        let c = &self.constraints[f];
        let v = surface_violation(c, self.surface, xi);
        let mut p = xi.to_vec();
        for (j, g) in grad.iter_mut().enumerate() {
            let lo = (xi[j] - FD_STEP).max(0.0);
            let hi = (xi[j] + FD_STEP).min(1.0);
            p[j] = hi;
            let vh = surface_violation(c, self.surface, &p);
            p[j] = lo;
            let vl = surface_violation(c, self.surface, &p);
            p[j] = xi[j];
            *g = (vh - vl) / (hi - lo);
        }
        v
    }

    fn value(&self, f: usize, xi: &[f64]) -> f64 {
        surface_violation(&self.constraints[f], self.surface, xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBudget {
    pub scan_points: usize,
    pub refine_steps: usize,
    /// Starts taken from the best scan values; as many again are taken from
    /// the head of the scan regardless of value.
    pub multistarts: usize,
    /// Coordinate sweeps after the gradient refinement (0 disables).
    pub sweeps: usize,
    pub line_points: usize,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            scan_points: 4096,
            refine_steps: 50,
            multistarts: 8,
            sweeps: 5,
            line_points: 33,
        }
    }
}

/// An index point together with its violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationPoint {
    pub point: Vec<f64>,
    pub value: f64,
}

/// Keeps the `k` largest values seen.
struct TopK {
    k: usize,
    items: Vec<ViolationPoint>,
    min_at: usize,
}

impl TopK {
    fn new(k: usize) -> Self {
        TopK {
            k,
            items: Vec::with_capacity(k),
            min_at: 0,
        }
    }

    fn floor(&self) -> f64 {
        if self.items.len() < self.k {
            f64::NEG_INFINITY
        } else {
            self.items[self.min_at].value
        }
    }

    fn push(&mut self, value: f64, point: &[f64]) {
        if self.k == 0 || value.is_nan() || value <= self.floor() {
            return;
        }
        let vp = ViolationPoint {
            point: point.to_vec(),
            value,
        };
        if self.items.len() < self.k {
            self.items.push(vp);
        } else {
            self.items[self.min_at] = vp;
        }
        self.min_at = self
            .items
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
            .map(|(i, _)| i)
            .unwrap_or(0);
    }

    fn into_sorted(mut self) -> Vec<ViolationPoint> {
        self.items.sort_by(|a, b| b.value.total_cmp(&a.value));
        self.items
    }
}

/// Projected gradient ascent with backtracking on family `f`.
pub fn refine(field: &dyn ViolationField, f: usize, start: &[f64], steps: usize) -> ViolationPoint {
    let d = field.dim();
    let mut x = start.to_vec();
    let mut g = vec![0.0; d];
    let mut gt = vec![0.0; d];
    let mut fx = field.value_grad(f, &x, &mut g);
    let mut alpha = 0.25;
    let mut trial = vec![0.0; d];
    for _ in 0..steps {
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn > 0.0) || !fx.is_finite() {
            break;
        }
        let mut accepted = false;
        while alpha > 1e-12 {
            let mut gain = 0.0;
            for j in 0..d {
                trial[j] = (x[j] + alpha * g[j] / gn).clamp(0.0, 1.0);
                gain += g[j] * (trial[j] - x[j]);
            }
            if gain <= 0.0 {
                break;
            }
            let ft = field.value_grad(f, &trial, &mut gt);
            if ft >= fx + 1e-4 * gain {
                x.copy_from_slice(&trial);
                g.copy_from_slice(&gt);
                fx = ft;
                accepted = true;
                alpha = (2.0 * alpha).min(0.5);
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    ViolationPoint { point: x, value: fx }
}

/// Cyclic coordinate ascent where each coordinate move is a global line
/// search: `line_points` evenly spaced values over `[0, 1]`, then a golden
/// section polish around the best. Reaches faces and crosses ridges that
/// stop the gradient step.
pub fn coordinate_sweep(field: &dyn ViolationField, f: usize, start: &ViolationPoint, sweeps: usize, line_points: usize) -> ViolationPoint {
    let d = field.dim();
    let n = line_points.max(2);
    let mut x = start.point.clone();
    let mut fx = start.value;
    let mut probe = x.clone();
    for _ in 0..sweeps {
        let before = fx;
        for i in 0..d {
            probe.copy_from_slice(&x);
            let mut at = |t: f64| {
                probe[i] = t;
                field.value(f, &probe)
            };
            let (mut best_t, mut best) = (x[i], fx);
            for k in 0..n {
                let t = k as f64 / (n - 1) as f64;
                let v = at(t);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            let h = 1.0 / (n - 1) as f64;
            let (mut lo, mut hi) = ((best_t - h).max(0.0), (best_t + h).min(1.0));
            let phi = 0.5 * (5f64.sqrt() - 1.0);
            let (mut a, mut b) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
            let (mut fa, mut fb) = (at(a), at(b));
            for _ in 0..40 {
                if fa > fb {
                    hi = b;
                    b = a;
                    fb = fa;
                    a = hi - phi * (hi - lo);
                    fa = at(a);
                } else {
                    lo = a;
                    a = b;
                    fa = fb;
                    b = lo + phi * (hi - lo);
                    fb = at(b);
                }
            }
            for (t, v) in [(a, fa), (b, fb)] {
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            if best > fx {
                x[i] = best_t;
                fx = best;
            }
        }
        if !(fx > before) {
            break;
        }
    }
    ViolationPoint { point: x, value: fx }
}

/// Gradient refinement, coordinate sweeps, then a final gradient pass.
/// Never returns a point worse than `start`.
pub fn polish(field: &dyn ViolationField, f: usize, start: ViolationPoint, steps: usize, sweeps: usize, line_points: usize) -> ViolationPoint {
    let better = |a: ViolationPoint, b: ViolationPoint| if b.value > a.value { b } else { a };
    let r = refine(field, f, &start.point, steps);
    let mut best = better(start, r);
    if sweeps > 0 {
        let c = coordinate_sweep(field, f, &best, sweeps, line_points);
        if c.value > best.value {
            let r = refine(field, f, &c.point, steps);
            best = better(c, r);
        }
    }
    best
}

fn distinct(points: &[ViolationPoint], p: &[f64]) -> bool {
    points
        .iter()
        .all(|q| q.point.iter().zip(p).any(|(a, b)| (a - b).abs() > 1e-6))
}

/// Scan plus multistart refinement for every family at once. Returns, per
/// family, the refined candidates sorted by decreasing violation (distinct
/// points only; at most `multistarts + 1` entries).
pub fn search_all(field: &dyn ViolationField, budget: &SearchBudget, seed: u64) -> Vec<Vec<ViolationPoint>> {
    let d = field.dim();
    let nf = field.n_families();
    let starts = budget.multistarts.max(1);
    let mut tops: Vec<TopK> = (0..nf).map(|_| TopK::new(starts)).collect();
    let mut spread: Vec<Vec<ViolationPoint>> = vec![Vec::with_capacity(starts); nf];
    let mut vals = vec![0.0; nf];
    let mut visit = |x: &[f64], tops: &mut Vec<TopK>, keep: bool| {
        field.values(x, &mut vals);
        for (f, (t, &v)) in tops.iter_mut().zip(&vals).enumerate() {
            t.push(v, x);
            if keep && !v.is_nan() {
                spread[f].push(ViolationPoint {
                    point: x.to_vec(),
                    value: v,
                });
            }
        }
    };
    if d <= 10 {
        for c in unit_corners(d) {
            visit(&c, &mut tops, false);
        }
    }
    for (k, x) in SobolPoints::new(d, seed).take(budget.scan_points).enumerate() {
        visit(&x, &mut tops, k < starts);
    }
    tops.into_iter()
        .zip(spread)
        .enumerate()
        .map(|(f, (top, spread))| {
            let mut found: Vec<ViolationPoint> = Vec::new();
            for s in top.into_sorted().into_iter().chain(spread) {
                let best = polish(field, f, s, budget.refine_steps, budget.sweeps, budget.line_points);
                if distinct(&found, &best.point) {
                    found.push(best);
                }
            }
            found.sort_by(|a, b| b.value.total_cmp(&a.value));
            found
        })
        .collect()
}

/// The single worst point of family `f`.
pub fn find_max_violation(field: &dyn ViolationField, f: usize, budget: &SearchBudget, seed: u64) -> ViolationPoint {
    let d = field.dim();
    let starts = budget.multistarts.max(1);
    let mut top = TopK::new(starts);
    let mut spread = Vec::with_capacity(starts);
    let mut g = vec![0.0; d];
    if d <= 10 {
        for c in unit_corners(d) {
            let v = field.value_grad(f, &c, &mut g);
            top.push(v, &c);
        }
    }
    for (k, x) in SobolPoints::new(d, seed).take(budget.scan_points).enumerate() {
        let v = field.value_grad(f, &x, &mut g);
        top.push(v, &x);
        if k < starts && !v.is_nan() {
            spread.push(ViolationPoint { point: x, value: v });
        }
    }
    top.into_sorted()
        .into_iter()
        .chain(spread)
        .map(|s| polish(field, f, s, budget.refine_steps, budget.sweeps, budget.line_points))
        .max_by(|a, b| a.value.total_cmp(&b.value))
        .expect("at least one start")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CertifyConfig {
    pub n_points: usize,
    /// Refinement starts per family from the worst scan values; as many
    /// again come from the head of the scan.
    pub refine_from: usize,
    pub refine_steps: usize,
    pub sweeps: usize,
    pub line_points: usize,
    pub eps_feas: f64,
    pub seed: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            n_points: 1_000_000,
            refine_from: 100,
            refine_steps: 100,
            sweeps: 10,
            line_points: 33,
            eps_feas: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCertificate {
    pub constraint: ConstraintSpec,
    pub max_violation: f64,
    /// Worst index point in transformed coordinates.
    pub argmax: Vec<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub families: Vec<FamilyCertificate>,
    pub pass: bool,
    pub eps_feas: f64,
    pub n_points: usize,
    pub seed: u64,
}

impl CertificationReport {
    pub fn max_violation(&self) -> f64 {
        self.families
            .iter()
            .map(|f| f.max_violation)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn failing(&self) -> impl Iterator<Item = &FamilyCertificate> {
        self.families.iter().filter(|f| !f.pass)
    }
}

fn spec_with_names(c: &ShapeConstraint, names: &[String]) -> ConstraintSpec {
    let dim = c
        .dim()
        .map(|i| names.get(i).cloned().unwrap_or_else(|| i.to_string()));
    let (value, r) = match *c {
        ShapeConstraint::LowerBound(v) | ShapeConstraint::UpperBound(v) => (Some(v), None),
        ShapeConstraint::Rebound { r, .. } => (None, Some(r)),
        _ => (None, None),
    };
    ConstraintSpec {
        kind: c.kind_name().to_string(),
        dim,
        value,
        r,
    }
}

/// High-budget verification: scan `n_points` low-discrepancy points (plus the
/// box corners), then polish from the `refine_from` worst per family and from
/// as many spread-out scan points.
pub fn certify_field(
    field: &dyn ViolationField,
    set: &ShapeConstraintSet,
    names: &[String],
    cfg: &CertifyConfig,
) -> CertificationReport {
    let d = field.dim();
    let nf = field.n_families();
    let k = cfg.refine_from.max(1);
    let mut tops: Vec<TopK> = (0..nf).map(|_| TopK::new(k)).collect();
    let mut spread: Vec<Vec<ViolationPoint>> = vec![Vec::with_capacity(k); nf];
    let mut vals = vec![0.0; nf];
    let corners = if d <= 10 { unit_corners(d) } else { Vec::new() };
    let n_corners = corners.len();
    for (i, x) in corners.into_iter().chain(SobolPoints::new(d, cfg.seed).take(cfg.n_points)).enumerate() {
        field.values(&x, &mut vals);
        let keep = i >= n_corners && i - n_corners < k;
        for (f, (t, &v)) in tops.iter_mut().zip(&vals).enumerate() {
            if v > t.floor() {
                t.push(v, &x);
            }
            if keep && !v.is_nan() {
                spread[f].push(ViolationPoint {
                    point: x.clone(),
                    value: v,
                });
            }
        }
    }
    let families = tops
        .into_iter()
        .zip(spread)
        .enumerate()
        .map(|(f, (top, spread))| {
            let best = top
                .into_sorted()
                .into_iter()
                .chain(spread)
                .map(|s| polish(field, f, s, cfg.refine_steps, cfg.sweeps, cfg.line_points))
                .max_by(|a, b| a.value.total_cmp(&b.value))
                .unwrap_or(ViolationPoint {
                    point: vec![0.5; d],
                    value: f64::NAN,
                });
            let c = &set.constraints()[f];
            FamilyCertificate {
                constraint: spec_with_names(c, names),
                max_violation: best.value,
                pass: best.value <= cfg.eps_feas,
                argmax: best.point,
            }
        })
        .collect::<Vec<_>>();
    CertificationReport {
        pass: families.iter().all(|f| f.pass),
        families,
        eps_feas: cfg.eps_feas,
        n_points: cfg.n_points,
        seed: cfg.seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square() -> Polynomial {
        let b = Arc::new(MonomialBasis::new(1, 2).unwrap());
        Polynomial::new(b, vec![0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn square_is_increasing_not_decreasing() {
        let set = ShapeConstraintSet::new(
            1,
            vec![ShapeConstraint::MonotoneIncreasing(0)],
        )
        .unwrap();
        let field = PolynomialField::new(&square(), &set).unwrap();
        let v = find_max_violation(&field, 0, &SearchBudget::default(), 1);
        assert!(v.value.abs() < 1e-12 && v.point[0] < 1e-9, "{v:?}");

        let set = ShapeConstraintSet::new(1, vec![ShapeConstraint::MonotoneDecreasing(0)]).unwrap();
        let field = PolynomialField::new(&square(), &set).unwrap();
        let v = find_max_violation(&field, 0, &SearchBudget::default(), 1);
        assert!((v.value - 2.0).abs() < 1e-12 && (v.point[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_model_within_bounds_passes() {
        let b = Arc::new(MonomialBasis::new(5, 2).unwrap());
        let mut w = vec![0.0; b.len()];
        w[0] = 0.3;
        let model = Polynomial::new(b, w).unwrap();
        let set = ShapeConstraintSet::new(
            5,
            vec![ShapeConstraint::LowerBound(0.1), ShapeConstraint::UpperBound(0.5)],
        )
        .unwrap();
        let field = PolynomialField::new(&model, &set).unwrap();
        let cfg = CertifyConfig {
            n_points: 1000,
            ..CertifyConfig::default()
        };
        let rep = certify_field(&field, &set, &[], &cfg);
        assert!(rep.pass);
        for f in &rep.families {
            assert!((f.max_violation + 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn refined_search_beats_dense_scan_on_quartics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = Arc::new(MonomialBasis::new(2, 4).unwrap());
        for trial in 0..5 {
            let w: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let model = Polynomial::new(Arc::clone(&b), w).unwrap();
            let set = ShapeConstraintSet::new(
                2,
                vec![
                    ShapeConstraint::UpperBound(0.0),
                    ShapeConstraint::Convex(0),
                    ShapeConstraint::MonotoneDecreasing(1),
                ],
            )
            .unwrap();
            let field = PolynomialField::new(&model, &set).unwrap();
            // 1000 x 1000 grid reference
            let mut dense = [f64::NEG_INFINITY; 3];
            let mut vals = [0.0; 3];
            for a in 0..1000 {
                for c in 0..1000 {
                    field.values(&[a as f64 / 999.0, c as f64 / 999.0], &mut vals);
                    for k in 0..3 {
                        dense[k] = dense[k].max(vals[k]);
                    }
                }
            }
            for k in 0..3 {
                let found = find_max_violation(&field, k, &SearchBudget::default(), trial).value;
                let tol = 1e-3 * dense[k].abs().max(1e-9);
                assert!(found >= dense[k] - tol, "family {k}: {found} < {}", dense[k]);
            }
        }
    }

    #[test]
    fn surface_field_agrees_with_polynomial_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = Arc::new(MonomialBasis::new(3, 3).unwrap());
        let w: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let model = Polynomial::new(b, w).unwrap();
        let set = ShapeConstraintSet::new(
            3,
            vec![
                ShapeConstraint::LowerBound(-0.5),
                ShapeConstraint::MonotoneIncreasing(0),
                ShapeConstraint::Concave(1),
                ShapeConstraint::Rebound { dim: 2, r: 0.3 },
            ],
        )
        .unwrap();
        let exact = PolynomialField::new(&model, &set).unwrap();
        let generic = SurfaceField::new(&model, &set);
        let mut a = [0.0; 4];
        let mut c = [0.0; 4];
        let mut ga = [0.0; 3];
        let mut gc = [0.0; 3];
        for x in SobolPoints::new(3, 0).take(200) {
            exact.values(&x, &mut a);
            generic.values(&x, &mut c);
            for k in 0..4 {
                assert!((a[k] - c[k]).abs() < 1e-10);
                exact.value_grad(k, &x, &mut ga);
                generic.value_grad(k, &x, &mut gc);
                for j in 0..3 {
                    assert!((ga[j] - gc[j]).abs() < 1e-5 * (1.0 + ga[j].abs()), "{k} {j}");
                }
            }
        }
    }
}
