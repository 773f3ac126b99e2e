//! Linearly constrained least squares.
//!
//! Solves `min ||A w - y||^2 + eps ||w||^2  s.t.  G w <= h` with a dual
//! active-set method (Goldfarb-Idnani). The method starts from the
//! unconstrained minimizer and adds violated constraints one at a time while
//! keeping the multipliers non-negative, so a solved instance stays a valid
//! starting point after more rows are appended. [`QpSolver`] keeps that state
//! between calls; [`solve_qp`] is the one-shot wrapper.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QpError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
    #[error("regularization must be finite and >= 0, got {0}")]
    BadRegularization(f64),
    #[error("normal matrix is singular; use a positive regularization")]
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `||2A^T(Aw - y) + 2 eps w + G^T mu||_inf / (1 + ||A^T y||_inf)`.
    pub stationarity: f64,
    /// `max(0, max_i (G w - h)_i)`.
    pub primal_feas: f64,
    /// `|mu^T (G w - h)|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal_feas).max(self.complementarity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub w: Vec<f64>,
    /// `||A w - y||^2 + eps ||w||^2`.
    pub objective: f64,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: Vec<f64>,
    pub kkt: KktResiduals,
    pub status: QpStatus,
    pub iterations: usize,
    pub active_set: Vec<usize>,
    /// For `Infeasible`: `mu >= 0` with `G^T mu = 0` and `h^T mu < 0`.
    pub certificate: Option<Vec<f64>>,
}

/// Dense problem data; `g` has one row per constraint.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    /// `None` selects `1e-10 * trace(A^T A) / p`.
    pub eps_reg: Option<f64>,
}

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// The default Tikhonov floor for a design matrix.
pub fn default_regularization(a: &DMatrix<f64>) -> f64 {
    let p = a.ncols().max(1) as f64;
    let trace = a.iter().map(|v| v * v).sum::<f64>();
    if trace > 0.0 {
        1e-10 * trace / p
    } else {
        1e-10
    }
}

pub fn solve_qp(problem: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution, QpError> {
    let p = problem.a.ncols();
    if problem.g.nrows() > 0 && problem.g.ncols() != p {
        return Err(QpError::Shape(format!("G has {} columns, A has {p}", problem.g.ncols())));
    }
    if problem.g.nrows() != problem.h.len() {
        return Err(QpError::Shape(format!(
            "G has {} rows, h has {} entries",
            problem.g.nrows(),
            problem.h.len()
        )));
    }
    let mut solver = QpSolver::new(&problem.a, &problem.y, problem.eps_reg)?;
    let mut row = vec![0.0; p];
    for i in 0..problem.g.nrows() {
        for (k, r) in row.iter_mut().enumerate() {
            *r = problem.g[(i, k)];
        }
        solver.add_constraint(&row, problem.h[i])?;
    }
    Ok(solver.solve(tol, max_iter))
}

/// Incremental solver state. Rows may be appended between solves; the next
/// solve resumes from the previous active set.
#[derive(Debug, Clone)]
pub struct QpSolver {
    p: usize,
    a: DMatrix<f64>,
    y: DVector<f64>,
    eps: f64,
    aty_norm: f64,
    x_unc: DVector<f64>,
    // Invariant: J^T N_A = [R; 0] with N_A the active normals (columns, `-g_i`).
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    active: Vec<usize>,
    u: Vec<f64>,
    x: DVector<f64>,
    g: Vec<f64>,
    g_norm: Vec<f64>,
    h: Vec<f64>,
    iterations: usize,
}

enum Outcome {
    Done,
    MaxIter,
    Infeasible(Vec<f64>),
}

impl QpSolver {
    pub fn new(a: &DMatrix<f64>, y: &DVector<f64>, eps_reg: Option<f64>) -> Result<Self, QpError> {
        let (n, p) = a.shape();
        if y.len() != n {
            return Err(QpError::Shape(format!("A has {n} rows, y has {} entries", y.len())));
        }
        if p == 0 {
            return Err(QpError::Shape("no unknowns".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("A"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("y"));
        }
        let eps = eps_reg.unwrap_or_else(|| default_regularization(a));
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(QpError::BadRegularization(eps));
        }

        let mut aug = DMatrix::zeros(n + p, p);
        aug.view_mut((0, 0), (n, p)).copy_from(a);
        let se = eps.sqrt();
        for k in 0..p {
            aug[(n + k, k)] = se;
        }
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(0, n).copy_from(y);
        let qr = aug.qr();
        let rf = qr.r();
        let dmax = (0..p).map(|k| rf[(k, k)].abs()).fold(0.0, f64::max);
        if dmax == 0.0 || (0..p).any(|k| rf[(k, k)].abs() <= 1e-14 * dmax) {
            return Err(QpError::Singular);
        }
        let qty = qr.q().transpose() * &rhs;
        let x_unc = rf.solve_upper_triangular(&qty).ok_or(QpError::Singular)?;
        let mut j = DMatrix::identity(p, p) / std::f64::consts::SQRT_2;
        if !rf.solve_upper_triangular_mut(&mut j) {
            return Err(QpError::Singular);
        }
        let aty_norm = (a.transpose() * y).amax();
        Ok(QpSolver {
            p,
            a: a.clone(),
            y: y.clone(),
            eps,
            aty_norm,
            x: x_unc.clone(),
            x_unc,
            j,
            r: DMatrix::zeros(p, p),
            active: Vec::new(),
            u: Vec::new(),
            g: Vec::new(),
            g_norm: Vec::new(),
            h: Vec::new(),
            iterations: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn regularization(&self) -> f64 {
        self.eps
    }

    pub fn n_constraints(&self) -> usize {
        self.h.len()
    }

    /// The unconstrained minimizer.
    pub fn unconstrained(&self) -> &[f64] {
        self.x_unc.as_slice()
    }

    /// Appends `row^T w <= offset`.
    pub fn add_constraint(&mut self, row: &[f64], offset: f64) -> Result<(), QpError> {
        if row.len() != self.p {
            return Err(QpError::Shape(format!(
                "constraint row has {} entries, expected {}",
                row.len(),
                self.p
            )));
        }
        if !offset.is_finite() || row.iter().any(|v| !v.is_finite()) {
            return Err(QpError::NonFinite("G/h"));
        }
        self.g.extend_from_slice(row);
        self.g_norm.push(row.iter().map(|v| v * v).sum::<f64>().sqrt());
        self.h.push(offset);
        Ok(())
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.g[i * self.p..(i + 1) * self.p]
    }

    fn violation(&self, i: usize) -> f64 {
        crate::polybasis::dot(self.row(i), self.x.as_slice()) - self.h[i]
    }

    /// Runs the active-set iteration from the current state.
    pub fn solve(&mut self, tol: f64, max_iter: usize) -> QpSolution {
        let budget_end = self.iterations.saturating_add(max_iter);
        let add_tol = 0.1 * tol;
        let mut outcome = Outcome::Done;
        // A few polishing rounds: recompute from the factors and resume if the
        // recomputed point drifted outside the feasible set.
        for _ in 0..20 {
            outcome = self.iterate(add_tol, budget_end);
            if !matches!(outcome, Outcome::Done) {
                break;
            }
            self.recompute();
            if let Some((k, _)) = self
                .u
                .iter()
                .enumerate()
                .filter(|(_, &v)| v < -add_tol)
                .min_by(|a, b| a.1.total_cmp(b.1))
            {
                self.drop_active(k);
                self.recompute();
                continue;
            }
            let worst = (0..self.h.len())
                .map(|i| self.violation(i))
                .fold(f64::NEG_INFINITY, f64::max);
            if worst <= add_tol {
                break;
            }
        }
        self.report(outcome)
    }

    fn iterate(&mut self, add_tol: f64, budget_end: usize) -> Outcome {
        let p = self.p;
        let mut d = DVector::zeros(p);
        let mut z = DVector::zeros(p);
        let mut rvec = vec![0.0; p];
        loop {
            let mut chosen = None;
            let mut best = 0.0;
            for i in 0..self.h.len() {
                let v = self.violation(i);
                if v > add_tol && self.g_norm[i] > 0.0 {
                    let score = v / self.g_norm[i];
                    if score > best && !self.active.contains(&i) {
                        best = score;
                        chosen = Some(i);
                    }
                } else if v > add_tol && self.g_norm[i] == 0.0 {
                    // 0 <= h with h < 0.
                    let mut cert = vec![0.0; self.h.len()];
                    cert[i] = 1.0;
                    return Outcome::Infeasible(cert);
                }
            }
            let Some(pc) = chosen else {
                return Outcome::Done;
            };
            let mut u_p = 0.0;
            loop {
                if self.iterations >= budget_end {
                    return Outcome::MaxIter;
                }
                self.iterations += 1;
                let q = self.active.len();
                // d = J^T n with n = -g_p
                let n_row = self.row(pc).to_vec();
                for k in 0..p {
                    let col = self.j.column(k);
                    d[k] = -crate::polybasis::dot(col.as_slice(), &n_row);
                }
                let d2sq: f64 = d.rows(q, p - q).iter().map(|v| v * v).sum();
                let dsq: f64 = d.iter().map(|v| v * v).sum();
                z.fill(0.0);
                let full_possible = d2sq > 1e-24 * dsq.max(f64::MIN_POSITIVE);
                if full_possible {
                    for k in q..p {
                        z.axpy(d[k], &self.j.column(k), 1.0);
                    }
                }
                // r = R^{-1} d1
                for k in (0..q).rev() {
                    let mut s = d[k];
                    for c in k + 1..q {
                        s -= self.r[(k, c)] * rvec[c];
                    }
                    rvec[k] = s / self.r[(k, k)];
                }
                let mut t1 = f64::INFINITY;
                let mut drop = None;
                for k in 0..q {
                    if rvec[k] > 0.0 {
                        let t = self.u[k] / rvec[k];
                        if t < t1 {
                            t1 = t;
                            drop = Some(k);
                        }
                    }
                }
                let t2 = if full_possible {
                    (self.violation(pc) / d2sq).max(0.0)
                } else {
                    f64::INFINITY
                };
                if t1.is_infinite() && t2.is_infinite() {
                    let mut cert = vec![0.0; self.h.len()];
                    cert[pc] = 1.0;
                    for k in 0..q {
                        cert[self.active[k]] = (-rvec[k]).max(0.0);
                    }
                    return Outcome::Infeasible(cert);
                }
                let t = t1.min(t2);
                if full_possible {
                    self.x.axpy(t, &z, 1.0);
                }
                for k in 0..q {
                    self.u[k] -= t * rvec[k];
                }
                u_p += t;
                if t2 <= t1 {
                    self.push_active(pc, u_p, &mut d);
                    break;
                }
                let k = drop.expect("partial step has a blocking constraint");
                self.drop_active(k);
            }
        }
    }

    fn push_active(&mut self, idx: usize, u: f64, d: &mut DVector<f64>) {
        let p = self.p;
        let q = self.active.len();
        for k in (q + 1..p).rev() {
            let (a, b) = (d[k - 1], d[k]);
            if b == 0.0 {
                continue;
            }
            let hyp = a.hypot(b);
            let (c, s) = (a / hyp, b / hyp);
            d[k - 1] = hyp;
            d[k] = 0.0;
            rotate_columns(&mut self.j, k - 1, k, c, s);
        }
        for k in 0..=q {
            self.r[(k, q)] = d[k];
        }
        self.active.push(idx);
        self.u.push(u);
    }

    fn drop_active(&mut self, k: usize) {
        let q = self.active.len();
        self.active.remove(k);
        self.u.remove(k);
        for c in k..q - 1 {
            for row in 0..=c + 1 {
                self.r[(row, c)] = self.r[(row, c + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        for c in k..q - 1 {
            let (a, b) = (self.r[(c, c)], self.r[(c + 1, c)]);
            if b == 0.0 {
                continue;
            }
            let hyp = a.hypot(b);
            let (cs, sn) = (a / hyp, b / hyp);
            for col in c..q - 1 {
                let (x1, x2) = (self.r[(c, col)], self.r[(c + 1, col)]);
                self.r[(c, col)] = cs * x1 + sn * x2;
                self.r[(c + 1, col)] = -sn * x1 + cs * x2;
            }
            self.r[(c + 1, c)] = 0.0;
            rotate_columns(&mut self.j, c, c + 1, cs, sn);
        }
    }

    /// Re-derives `x` and `u` from the factors:
    /// `v = R^{-T}(b_A - N_A^T x_unc)`, `x = x_unc + J_1 v`, `u = R^{-1} v`.
    fn recompute(&mut self) {
        let q = self.active.len();
        let mut v = vec![0.0; q];
        for k in 0..q {
            let i = self.active[k];
            // b_i - n_i^T x_unc = -h_i + g_i^T x_unc
            let mut s = crate::polybasis::dot(self.row(i), self.x_unc.as_slice()) - self.h[i];
            for c in 0..k {
                s -= self.r[(c, k)] * v[c];
            }
            v[k] = s / self.r[(k, k)];
        }
        self.x.copy_from(&self.x_unc);
        for (k, vk) in v.iter().enumerate() {
            self.x.axpy(*vk, &self.j.column(k), 1.0);
        }
        for k in (0..q).rev() {
            let mut s = v[k];
            for c in k + 1..q {
                s -= self.r[(k, c)] * self.u[c];
            }
            self.u[k] = s / self.r[(k, k)];
        }
    }

    fn report(&self, outcome: Outcome) -> QpSolution {
        let m = self.h.len();
        let mut mu = vec![0.0; m];
        for (k, &i) in self.active.iter().enumerate() {
            mu[i] = self.u[k].max(0.0);
        }
        let w = self.x.clone();
        let resid = &self.a * &w - &self.y;
        let objective = resid.norm_squared() + self.eps * w.norm_squared();
        let mut grad = self.a.transpose() * &resid * 2.0 + &w * (2.0 * self.eps);
        let mut feas: f64 = 0.0;
        let mut comp = 0.0;
        for i in 0..m {
            let v = self.violation(i);
            feas = feas.max(v);
            if mu[i] != 0.0 {
                comp += mu[i] * v;
                for (gk, rk) in grad.iter_mut().zip(self.row(i)) {
                    *gk += mu[i] * rk;
                }
            }
        }
        let kkt = KktResiduals {
            stationarity: grad.amax() / (1.0 + self.aty_norm),
            primal_feas: feas,
            complementarity: comp.abs(),
        };
        let (status, certificate) = match outcome {
            Outcome::Done => (QpStatus::Optimal, None),
            Outcome::MaxIter => (QpStatus::MaxIter, None),
            Outcome::Infeasible(c) => (QpStatus::Infeasible, Some(c)),
        };
        QpSolution {
            w: w.as_slice().to_vec(),
            objective,
            multipliers: mu,
            kkt,
            status,
            iterations: self.iterations,
            active_set: self.active.clone(),
            certificate,
        }
    }
}

fn rotate_columns(j: &mut DMatrix<f64>, k1: usize, k2: usize, c: f64, s: f64) {
    let n = j.nrows();
    for row in 0..n {
        let (a, b) = (j[(row, k1)], j[(row, k2)]);
        j[(row, k1)] = c * a + s * b;
        j[(row, k2)] = -s * a + c * b;
    }
}
