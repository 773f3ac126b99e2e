//! Penalized least squares for the initial, purely data-driven model.
//!
//! Minimizes `sum_j (w^T phi(z_j) - y_j)^2 + lambda * pen(w)` with
//! `pen = ||w||_1` (lasso) or `||w||_2^2` (ridge). The constant monomial
//! (index 0) is never penalized.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, InputTransform, TransformKind};
use crate::metrics::{complement, fold_assignment, MetricsError};
use crate::model::PolynomialModel;
use crate::polybasis::{BasisError, MonomialBasis, Polynomial};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressionError {
    #[error("coordinate descent did not converge in {sweeps} sweeps (last max change {last_change:e}, objective {objective})")]
    NoConvergence {
        sweeps: usize,
        last_change: f64,
        objective: f64,
    },
    #[error("regularization must be positive and finite, got {0}")]
    BadLambda(f64),
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("non-finite entry in the design matrix")]
    NonFinite,
    #[error("ridge system is singular")]
    Singular,
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Folds(#[from] MetricsError),
    #[error(transparent)]
    Transform(#[from] crate::domain::DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Lasso,
    Ridge,
}

/// `N x p` matrix of basis values at the transformed inputs.
pub fn design_matrix(basis: &MonomialBasis, zs: &[Vec<f64>]) -> DMatrix<f64> {
    let p = basis.len();
    let mut a = DMatrix::zeros(zs.len(), p);
    let mut phi = vec![0.0; p];
    for (j, z) in zs.iter().enumerate() {
        basis.eval_into(z, &mut phi);
        for k in 0..p {
            a[(j, k)] = phi[k];
        }
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LassoOptions {
    /// Stop when the largest coefficient change, measured in prediction
    /// units (`|dw_k| * ||A_k||`), falls below this.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Sweeps between attempts to jump to the exact minimizer on the
    /// current support and sign pattern.
    pub polish_every: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tol: 1e-8,
            max_sweeps: 100_000,
            polish_every: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub w: Vec<f64>,
    pub sweeps: usize,
    /// Objective after every sweep (and after every accepted polish).
    pub objective_trace: Vec<f64>,
}

struct Gram {
    g: DMatrix<f64>,
    q: DVector<f64>,
    yy: f64,
}

impl Gram {
    fn new(a: &DMatrix<f64>, y: &DVector<f64>) -> Self {
        Gram {
            g: a.transpose() * a,
            q: a.transpose() * y,
            yy: y.norm_squared(),
        }
    }

    fn objective(&self, w: &[f64], gw: &[f64], lambda: f64) -> f64 {
        let quad: f64 = w.iter().zip(gw).map(|(a, b)| a * b).sum();
        let lin: f64 = w.iter().zip(self.q.iter()).map(|(a, b)| a * b).sum();
        let l1: f64 = w.iter().skip(1).map(|v| v.abs()).sum();
        (quad - 2.0 * lin + self.yy).max(0.0) + lambda * l1
    }
}

fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Cyclic coordinate descent with soft-thresholding:
/// `w_k <- soft(rho_k, lambda / 2) / G_kk` with `rho_k = q_k - (G w)_k + G_kk w_k`.
pub fn lasso_cd(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    warm: Option<&[f64]>,
    opts: &LassoOptions,
) -> Result<LassoFit, RegressionError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RegressionError::BadLambda(lambda));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    lasso_gram(&Gram::new(a, y), lambda, warm, opts)
}

fn lasso_gram(gram: &Gram, lambda: f64, warm: Option<&[f64]>, opts: &LassoOptions) -> Result<LassoFit, RegressionError> {
    let p = gram.q.len();
    let mut w = warm.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p]);
    let mut gw: Vec<f64> = (&gram.g * DVector::from_column_slice(&w)).iter().copied().collect();
    let col_norm: Vec<f64> = (0..p).map(|k| gram.g[(k, k)].sqrt()).collect();
    let mut trace = Vec::new();
    let mut obj = gram.objective(&w, &gw, lambda);
    let mut last_change = f64::INFINITY;
    for sweep in 1..=opts.max_sweeps {
        let mut max_change: f64 = 0.0;
        for k in 0..p {
            let gkk = gram.g[(k, k)];
            if gkk <= 0.0 {
                continue;
            }
            let rho = gram.q[k] - gw[k] + gkk * w[k];
            let new = if k == 0 { rho / gkk } else { soft(rho, 0.5 * lambda) / gkk };
            let delta = new - w[k];
            if delta != 0.0 {
                w[k] = new;
                let col = gram.g.column(k);
                for (gi, ci) in gw.iter_mut().zip(col.iter()) {
                    *gi += delta * ci;
                }
                max_change = max_change.max(delta.abs() * col_norm[k]);
            }
        }
        obj = gram.objective(&w, &gw, lambda);
        trace.push(obj);
        last_change = max_change;
        if max_change <= opts.tol {
            return Ok(LassoFit {
                w,
                sweeps: sweep,
                objective_trace: trace,
            });
        }
        if opts.polish_every > 0 && sweep % opts.polish_every == 0 {
            if let Some((wp, gwp, op)) = polish(gram, &w, lambda) {
                if op < obj {
                    w = wp;
                    gw = gwp;
                    obj = op;
                    trace.push(obj);
                }
            }
        }
    }
    Err(RegressionError::NoConvergence {
        sweeps: opts.max_sweeps,
        last_change,
        objective: obj,
    })
}

/// Active-set step: minimize the objective on the current support with the
/// current signs fixed. When a coefficient would change sign, stop where it
/// reaches zero, drop it from the support and retry. Every stop lies on a
/// segment along which the objective decreases.
fn polish(gram: &Gram, w: &[f64], lambda: f64) -> Option<(Vec<f64>, Vec<f64>, f64)> {
    let mut cur = w.to_vec();
    let mut support: Vec<usize> = (0..w.len()).filter(|&k| k == 0 || w[k] != 0.0).collect();
    while !support.is_empty() {
        let s = support.len();
        let gss = DMatrix::from_fn(s, s, |i, j| gram.g[(support[i], support[j])]);
        let rhs = DVector::from_fn(s, |i, _| {
            let k = support[i];
            gram.q[k] - if k == 0 { 0.0 } else { 0.5 * lambda * cur[k].signum() }
        });
        let sol = gss.cholesky()?.solve(&rhs);
        let mut t_cross = 1.0;
        let mut blocking = None;
        for (i, &k) in support.iter().enumerate() {
            if k != 0 && sol[i].signum() != cur[k].signum() {
                let t = cur[k] / (cur[k] - sol[i]);
                if t < t_cross {
                    t_cross = t;
                    blocking = Some(i);
                }
            }
        }
        for (i, &k) in support.iter().enumerate() {
            cur[k] += t_cross * (sol[i] - cur[k]);
        }
        match blocking {
            None => break,
            Some(i) => {
                cur[support[i]] = 0.0;
                support.remove(i);
            }
        }
    }
    let gw: Vec<f64> = (&gram.g * DVector::from_column_slice(&cur)).iter().copied().collect();
    let obj = gram.objective(&cur, &gw, lambda);
    Some((cur, gw, obj))
}

/// Closed-form ridge solution via QR of `[A; sqrt(lambda) I_pen]`.
pub fn ridge(a: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Result<Vec<f64>, RegressionError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(RegressionError::BadLambda(lambda));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }
    let (n, p) = a.shape();
    let mut aug = DMatrix::zeros(n + p, p);
    aug.view_mut((0, 0), (n, p)).copy_from(a);
    let sl = lambda.sqrt();
    for k in 1..p {
        aug[(n + k, k)] = sl;
    }
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(y);
    let qr = aug.qr();
    let qty = qr.q().transpose() * rhs;
    let w = qr.r().solve_upper_triangular(&qty).ok_or(RegressionError::Singular)?;
    if w.iter().any(|v| !v.is_finite()) {
        return Err(RegressionError::Singular);
    }
    Ok(w.iter().copied().collect())
}

/// One penalized fit in transformed coordinates.
pub fn fit_penalized(
    data: &Dataset,
    transform: &InputTransform,
    basis: &MonomialBasis,
    lambda: f64,
    penalty: Penalty,
) -> Result<Vec<f64>, RegressionError> {
    let a = design_matrix(basis, &transform.forward_all(data.inputs()));
    let y = DVector::from_column_slice(data.outputs());
    match penalty {
        Penalty::Ridge => ridge(&a, &y, lambda),
        Penalty::Lasso => Ok(lasso_cd(&a, &y, lambda, None, &LassoOptions::default())?.w),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressionConfig {
    pub degree: usize,
    pub penalty: Penalty,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub transform: TransformKind,
    pub lasso: LassoOptions,
}

/// `n` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            degree: 3,
            penalty: Penalty::Lasso,
            lambda_grid: log_grid(1e-6, 1e1, 30),
            folds: 10,
            seed: 0,
            transform: TransformKind::SqrtThenUnitScale,
            lasso: LassoOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub lambda: f64,
    pub mean_rmse: f64,
    pub fold_rmse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct InitialFit {
    pub model: PolynomialModel,
    pub lambda: f64,
    pub cv: Vec<CvRow>,
}

/// Fits every lambda of the grid from largest to smallest, warm-starting each
/// lasso solve from the previous one. Returned in grid order.
fn path(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[f64],
    penalty: Penalty,
    opts: &LassoOptions,
) -> Result<Vec<Vec<f64>>, RegressionError> {
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&i, &j| grid[j].total_cmp(&grid[i]));
    let mut out = vec![Vec::new(); grid.len()];
    match penalty {
        Penalty::Ridge => {
            for &i in &order {
                out[i] = ridge(a, y, grid[i])?;
            }
        }
        Penalty::Lasso => {
            let gram = Gram::new(a, y);
            let mut warm: Option<Vec<f64>> = None;
            for &i in &order {
                let fit = lasso_gram(&gram, grid[i], warm.as_deref(), opts)?;
                warm = Some(fit.w.clone());
                out[i] = fit.w;
            }
        }
    }
    Ok(out)
}

/// Chooses lambda by k-fold CV RMSE (plain argmin, first grid entry on
/// ties) and refits on all rows.
pub fn fit_initial_model(data: &Dataset, cfg: &RegressionConfig) -> Result<InitialFit, RegressionError> {
    if cfg.lambda_grid.is_empty() {
        return Err(RegressionError::EmptyGrid);
    }
    if let Some(&bad) = cfg.lambda_grid.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
        return Err(RegressionError::BadLambda(bad));
    }
    let transform = InputTransform::new(cfg.transform, data.input_box().clone())?;
    let basis = Arc::new(MonomialBasis::new(data.dim(), cfg.degree)?);
    let z = transform.forward_all(data.inputs());
    let a = design_matrix(&basis, &z);
    let y = DVector::from_column_slice(data.outputs());

    let folds = fold_assignment(data.len(), cfg.folds, cfg.seed)?;
    let mut fold_rmse = vec![Vec::with_capacity(folds.len()); cfg.lambda_grid.len()];
    for test in &folds {
        let train = complement(data.len(), test);
        let at = a.select_rows(&train);
        let yt = y.select_rows(&train);
        let ws = path(&at, &yt, &cfg.lambda_grid, cfg.penalty, &cfg.lasso)?;
        for (li, w) in ws.iter().enumerate() {
            let wv = DVector::from_column_slice(w);
            let sse: f64 = test
                .iter()
                .map(|&j| {
                    let e = a.row(j).transpose().dot(&wv) - y[j];
                    e * e
                })
                .sum();
            fold_rmse[li].push((sse / test.len() as f64).sqrt());
        }
    }
    let cv: Vec<CvRow> = cfg
        .lambda_grid
        .iter()
        .zip(fold_rmse)
        .map(|(&lambda, f)| CvRow {
            lambda,
            mean_rmse: f.iter().sum::<f64>() / f.len() as f64,
            fold_rmse: f,
        })
        .collect();
    let best = cv
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| if r.mean_rmse < cv[b].mean_rmse { i } else { b });
    let lambda = cv[best].lambda;

    // Refit along the same path so the warm starts match the CV fits.
    let ws = path(&a, &y, &cfg.lambda_grid, cfg.penalty, &cfg.lasso)?;
    let poly = Polynomial::new(basis, ws[best].clone())?;
    Ok(InitialFit {
        model: PolynomialModel::new(transform, poly)?,
        lambda,
        cv,
    })
}
