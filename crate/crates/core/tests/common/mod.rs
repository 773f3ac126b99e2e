//! Reference implementations used only by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random feasible instance: `A` is `(p + extra) x p`, `h = G w0 + slack`
/// with roughly a third of the slacks zero.
pub fn random_feasible_qp(seed: u64, p: usize, m: usize) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p + rng.random_range(0..6);
    let a = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
    let g = DMatrix::from_fn(m, p, |_, _| rng.random_range(-1.0..1.0));
    let w0 = DVector::from_fn(p, |_, _| rng.random_range(-0.5..0.5));
    let slack = DVector::from_fn(m, |_, _| {
        if rng.random_bool(0.33) {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        }
    });
    let h = &g * w0 + slack;
    (a, y, g, h)
}

/// Objective `||A w - y||^2 + eps ||w||^2` minimized over `G w <= h` by
/// accelerated projected gradient ascent on the dual (`mu >= 0`).
/// Returns `(dual lower bound, primal value at the dual-derived point)`.
pub fn dual_projected_gradient(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    g: &DMatrix<f64>,
    h: &DVector<f64>,
    eps: f64,
    iters: usize,
) -> (f64, f64) {
    let p = a.ncols();
    let q = (a.transpose() * a + DMatrix::identity(p, p) * eps) * 2.0;
    let lin = a.transpose() * y * -2.0;
    let c = y.norm_squared();
    let chol = q.clone().cholesky().expect("positive definite");
    let qinv = chol.inverse();
    let m = g.nrows();
    let hess = g * &qinv * g.transpose();
    let lip = hess.symmetric_eigenvalues().max().max(1e-12);
    let primal_x = |mu: &DVector<f64>| -&qinv * (&lin + g.transpose() * mu);
    let dual = |mu: &DVector<f64>| {
        let x = primal_x(mu);
        0.5 * x.dot(&(&q * &x)) + lin.dot(&x) + mu.dot(&(g * &x - h)) + c
    };
    let mut mu = DVector::zeros(m);
    let mut v = mu.clone();
    let mut tk: f64 = 1.0;
    let mut best = dual(&mu);
    for _ in 0..iters {
        let grad = g * primal_x(&v) - h;
        let next = (&v + grad / lip).map(|e| e.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * tk * tk).sqrt());
        let val = dual(&next);
        if val < best {
            // adaptive restart
            tk = 1.0;
            v = mu.clone();
            continue;
        }
        best = val;
        let prev = std::mem::replace(&mut mu, next);
        v = &mu + (&mu - &prev) * ((tk - 1.0) / t_next);
        tk = t_next;
    }
    let x = primal_x(&mu);
    let primal = (a * &x - y).norm_squared() + eps * x.norm_squared();
    (best, primal)
}

/// A polynomial as explicit `(exponents, coefficient)` terms, evaluated
/// with `powi`. Only the exponent list is taken from the basis under test.
pub struct OraclePoly {
    pub terms: Vec<(Vec<i32>, f64)>,
}

impl OraclePoly {
    pub fn from_basis(basis: &siascor::polybasis::MonomialBasis, coeffs: &[f64]) -> Self {
        let terms = (0..basis.len())
            .map(|k| (basis.exponents(k).iter().map(|&e| e as i32).collect(), coeffs[k]))
            .collect();
        OraclePoly { terms }
    }

    /// Partial derivative of order `order` (0, 1 or 2) in coordinate `i`.
    pub fn eval_d(&self, z: &[f64], i: usize, order: i32) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let mut factor = *c;
                for (j, (&ej, &zj)) in e.iter().zip(z).enumerate() {
                    if j == i && order > 0 {
                        if ej < order {
                            return 0.0;
                        }
                        let falling: i32 = (0..order).map(|q| ej - q).product();
                        factor *= falling as f64 * zj.powi(ej - order);
                    } else {
                        factor *= zj.powi(ej);
                    }
                }
                factor
            })
            .sum()
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.eval_d(z, 0, 0)
    }
}

/// Minimum of `f` over `[0, 1]` by a dense scan followed by golden-section
/// refinement around the best scan point.
pub fn scan_min(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let mut best_t = 0.0;
    let mut best = f(0.0);
    for k in 1..=n {
        let t = k as f64 / n as f64;
        let v = f(t);
        if v < best {
            best = v;
            best_t = t;
        }
    }
    let h = 1.0 / n as f64;
    let (mut lo, mut hi) = ((best_t - h).max(0.0), (best_t + h).min(1.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    best.min(f(0.5 * (lo + hi)))
}

/// Constraint families for one-dimensional instances.
#[derive(Debug, Clone, Copy)]
pub enum Family1d {
    Lower(f64),
    Upper(f64),
    Increasing,
    Decreasing,
    Convex,
    Concave,
    Rebound(f64),
}

/// Row `c` and offset `b` of `c^T w <= b` for one family at grid point `t`,
/// for the 1-d monomial basis `1, z, ..., z^m`.
pub fn row_1d(f: Family1d, m: usize, t: f64) -> (Vec<f64>, f64) {
    let pw = |k: usize, x: f64| if k == 0 { 1.0 } else { x.powi(k as i32) };
    let val: Vec<f64> = (0..=m).map(|k| pw(k, t)).collect();
    let d1: Vec<f64> = (0..=m).map(|k| if k == 0 { 0.0 } else { k as f64 * pw(k - 1, t) }).collect();
    let d2: Vec<f64> = (0..=m)
        .map(|k| if k < 2 { 0.0 } else { (k * (k - 1)) as f64 * pw(k - 2, t) })
        .collect();
    let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<_>>();
    match f {
        Family1d::Upper(u) => (val, u),
        Family1d::Lower(l) => (neg(val), -l),
        Family1d::Increasing => (neg(d1), 0.0),
        Family1d::Decreasing => (d1, 0.0),
        Family1d::Convex => (neg(d2), 0.0),
        Family1d::Concave => (d2, 0.0),
        Family1d::Rebound(r) => (
            (0..=m)
                .map(|k| 1.0 - r * if k == 0 { 1.0 } else { 0.0 } - (1.0 - r) * val[k])
                .collect(),
            0.0,
        ),
    }
}

/// One QP over a uniform grid of `n` points per family, optionally tightened by `delta`.
pub fn dense_grid_qp_1d(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    fams: &[Family1d],
    m: usize,
    n: usize,
    delta: f64,
) -> siascor::qp::QpSolution {
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for &f in fams {
        for k in 0..n {
            let t = k as f64 / (n - 1) as f64;
            let (c, b) = row_1d(f, m, t);
            rows.extend(c);
            rhs.push(b - delta);
        }
    }
    let g = DMatrix::from_row_slice(rhs.len(), m + 1, &rows);
    let problem = siascor::qp::QpProblem {
        a: a.clone(),
        y: y.clone(),
        g,
        h: DVector::from_vec(rhs),
        eps_reg: None,
    };
    siascor::qp::solve_qp(&problem, 1e-9, 1_000_000).expect("well-formed problem")
}

/// Random one-dimensional constrained fitting instance with data that
/// breaks the requested shape.
pub struct Instance1d {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub fams: Vec<Family1d>,
    pub degree: usize,
}

pub fn random_instance_1d(seed: u64) -> Instance1d {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(15..40);
    let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let (amp, om, ph, slope) = (
        rng.random_range(0.05..0.3),
        rng.random_range(2.0..9.0),
        rng.random_range(0.0..6.3),
        rng.random_range(-0.5..0.5),
    );
    let ys: Vec<f64> = xs
        .iter()
        .map(|x| amp * (om * x + ph).sin() + slope * x + rng.random_range(-0.02..0.02))
        .collect();
    let mut sorted = ys.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((n - 1) as f64 * p) as usize];
    let r = rng.random_range(0.1..1.0);
    let combos: Vec<Vec<Family1d>> = vec![
        vec![Family1d::Increasing],
        vec![Family1d::Decreasing],
        vec![Family1d::Convex],
        vec![Family1d::Concave],
        vec![Family1d::Increasing, Family1d::Concave],
        vec![Family1d::Decreasing, Family1d::Convex],
        vec![Family1d::Convex, Family1d::Rebound(r)],
        vec![Family1d::Decreasing, Family1d::Convex, Family1d::Rebound(r)],
        vec![Family1d::Lower(q(0.2)), Family1d::Upper(q(0.8))],
        vec![Family1d::Increasing, Family1d::Upper(q(0.7))],
        vec![Family1d::Convex, Family1d::Lower(q(0.3))],
    ];
    let fams = combos[rng.random_range(0..combos.len())].clone();
    let second_order = fams
        .iter()
        .any(|f| matches!(f, Family1d::Convex | Family1d::Concave | Family1d::Rebound(_)));
    let degree = rng.random_range(if second_order { 2 } else { 1 }..=4);
    Instance1d { xs, ys, fams, degree }
}

pub fn to_constraint(f: Family1d) -> siascor::constraints::ShapeConstraint {
    use siascor::constraints::ShapeConstraint as C;
    match f {
        Family1d::Lower(v) => C::LowerBound(v),
        Family1d::Upper(v) => C::UpperBound(v),
        Family1d::Increasing => C::MonotoneIncreasing(0),
        Family1d::Decreasing => C::MonotoneDecreasing(0),
        Family1d::Convex => C::Convex(0),
        Family1d::Concave => C::Concave(0),
        Family1d::Rebound(r) => C::Rebound { dim: 0, r },
    }
}

/// Accumulated Euclidean distances in (inputs, prediction) space, written
/// directly from the definition.
pub fn brute_force_anchors(model: &siascor::model::TrainedModel, data: &siascor::domain::Dataset, grid: &[Vec<f64>], scaling: siascor::fidelity::Scaling) -> (usize, usize) {
    let b = data.input_box();
    let preds: Vec<f64> = grid.iter().map(|g| model.predict(g)).collect();
    let (ylo, yhi) = data
        .outputs()
        .iter()
        .chain(&preds)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let sx = |x: &[f64], k: usize| match scaling {
        siascor::fidelity::Scaling::Raw => x[k],
        siascor::fidelity::Scaling::Unit => (x[k] - b.lower()[k]) * (1.0 / (b.upper()[k] - b.lower()[k])),
    };
    let sy = |y: f64| match scaling {
        siascor::fidelity::Scaling::Raw => y,
        siascor::fidelity::Scaling::Unit if yhi > ylo => (y - ylo) * (1.0 / (yhi - ylo)),
        siascor::fidelity::Scaling::Unit => y - ylo,
    };
    let mut scores = Vec::with_capacity(grid.len());
    for (g, p) in grid.iter().zip(&preds) {
        let mut total = 0.0;
        for (x, y) in data.inputs().iter().zip(data.outputs()) {
            let mut sq = 0.0;
            for k in 0..b.dim() {
                let t = sx(x, k) - sx(g, k);
                sq += t * t;
            }
            let t = sy(*y) - sy(*p);
            total += (sq + t * t).sqrt();
        }
        scores.push(total);
    }
    let mut best = (0, 0);
    for k in 1..scores.len() {
        if scores[k] < scores[best.0] {
            best.0 = k;
        }
        if scores[k] > scores[best.1] {
            best.1 = k;
        }
    }
    best
}
