//! Shape-constrained training by adaptive discretization.
//!
//! Each constraint family is an infinite set of affine inequalities in the
//! coefficients, one per index point of the unit box. The trainer keeps a
//! finite working set of index points per family, solves the least squares
//! problem restricted to those (tightened by a margin `delta`), searches the
//! box for the worst remaining violation and adds the offenders. When no
//! family is violated by more than `eps_feas`, a high-budget certification
//! pass decides whether to stop.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::constraints::{ConstraintError, ShapeConstraintSet};
use crate::domain::{Dataset, InputTransform, TransformKind};
use crate::lowdisc::{unit_corners, SobolPoints};
use crate::model::{PolynomialModel, TrainedModel};
use crate::polybasis::{BasisError, MonomialBasis, Polynomial};
use crate::qp::{QpError, QpSolver, QpStatus, DEFAULT_MAX_ITER};
use crate::regression::design_matrix;
use crate::violation::{certify_field, search_all, CertificationReport, CertifyConfig, PolynomialField, SearchBudget, SurfaceField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SipConfig {
    pub degree: usize,
    pub eps_feas: f64,
    /// Margin subtracted from every working-set offset.
    pub delta: f64,
    pub max_outer: usize,
    pub search: SearchBudget,
    pub add_per_family: usize,
    /// Low-discrepancy points per family in the initial working set (on top
    /// of the box corners).
    pub init_points: usize,
    pub certify_points: usize,
    pub certify_refine_from: usize,
    pub seed: u64,
    pub transform: TransformKind,
    pub qp_tol: f64,
    /// `None` selects the solver default.
    pub eps_reg: Option<f64>,
}

impl Default for SipConfig {
    fn default() -> Self {
        SipConfig {
            degree: 4,
            eps_feas: 1e-6,
            delta: 1e-5,
            max_outer: 100,
            search: SearchBudget::default(),
            add_per_family: 5,
            init_points: 64,
            certify_points: 1_000_000,
            certify_refine_from: 100,
            seed: 0,
            transform: TransformKind::SqrtThenUnitScale,
            qp_tol: 1e-9,
            eps_reg: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SipError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("constraints cannot be met together; conflicting families: {}", families.join(", "))]
    Infeasible { families: Vec<String> },
    #[error("inner solver stopped after its iteration limit at outer iteration {0}")]
    QpStalled(usize),
    #[error("constraint set has {set} dimensions, data has {data}")]
    DimMismatch { set: usize, data: usize },
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Data(#[from] crate::domain::DataError),
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub n_constraints: usize,
    pub family_max: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SipOutcome {
    pub model: PolynomialModel,
    pub objective: f64,
    pub log: Vec<IterationRecord>,
    pub certification: CertificationReport,
    /// False when the outer iteration limit was hit first.
    pub converged: bool,
    /// Working-set index points per family at the end.
    pub working_sets: Vec<Vec<Vec<f64>>>,
}

impl SipOutcome {
    pub fn certified(&self) -> bool {
        self.converged && self.certification.pass
    }
}

fn validate(cfg: &SipConfig) -> Result<(), SipError> {
    let bad = |m: &str| Err(SipError::Config(m.to_string()));
    if !(cfg.eps_feas > 0.0) {
        return bad("eps_feas must be positive");
    }
    if !(cfg.delta >= 0.0) {
        return bad("delta must be non-negative");
    }
    if cfg.max_outer == 0
        || cfg.search.scan_points == 0
        || cfg.search.refine_steps == 0
        || cfg.search.multistarts == 0
        || cfg.add_per_family == 0
        || cfg.certify_points == 0
    {
        return bad("iteration counts and search budgets must be at least 1");
    }
    if !(cfg.qp_tol > 0.0) {
        return bad("qp_tol must be positive");
    }
    Ok(())
}

struct Working<'a> {
    set: &'a ShapeConstraintSet,
    basis: &'a MonomialBasis,
    solver: QpSolver,
    delta: f64,
    points: Vec<Vec<Vec<f64>>>,
    row_family: Vec<usize>,
}

impl Working<'_> {
    fn add(&mut self, f: usize, xi: &[f64]) -> Result<(), SipError> {
        let row = self.set.constraints()[f].linearize(self.basis, xi)?;
        self.solver.add_constraint(&row.coeffs, row.offset - self.delta)?;
        self.points[f].push(xi.to_vec());
        self.row_family.push(f);
        Ok(())
    }
}

pub fn train_siascor(
    data: &Dataset,
    set: &ShapeConstraintSet,
    cfg: &SipConfig,
    mut on_iter: impl FnMut(&IterationRecord),
) -> Result<SipOutcome, SipError> {
    validate(cfg)?;
    if set.dim() != data.dim() {
        return Err(SipError::DimMismatch {
            set: set.dim(),
            data: data.dim(),
        });
    }
    let d = data.dim();
    let transform = InputTransform::new(cfg.transform, data.input_box().clone())?;
    let basis = Arc::new(MonomialBasis::new(d, cfg.degree)?);
    let a = design_matrix(&basis, &transform.forward_all(data.inputs()));
    let y = DVector::from_column_slice(data.outputs());
    let nf = set.len();
    let mut work = Working {
        set,
        basis: &basis,
        solver: QpSolver::new(&a, &y, cfg.eps_reg)?,
        delta: cfg.delta,
        points: vec![Vec::new(); nf],
        row_family: Vec::new(),
    };
    let seeds: Vec<Vec<f64>> = SobolPoints::new(d, cfg.seed ^ 0x1417).take(cfg.init_points).collect();
    for f in 0..nf {
        for c in unit_corners(d).iter().chain(&seeds) {
            work.add(f, c)?;
        }
    }

    let names = data.input_box().names().to_vec();
    let cert_cfg = CertifyConfig {
        n_points: cfg.certify_points,
        refine_from: cfg.certify_refine_from,
        refine_steps: 2 * cfg.search.refine_steps,
        sweeps: 2 * cfg.search.sweeps,
        line_points: cfg.search.line_points,
        eps_feas: cfg.eps_feas,
        seed: cfg.seed,
    };
    let mut log: Vec<IterationRecord> = Vec::new();
    let mut last = None;
    for iter in 1..=cfg.max_outer {
        let sol = work.solver.solve(cfg.qp_tol, DEFAULT_MAX_ITER);
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::MaxIter => return Err(SipError::QpStalled(iter)),
            QpStatus::Infeasible => {
                let cert = sol.certificate.unwrap_or_default();
                let mut fams: Vec<usize> = cert
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m > 0.0)
                    .map(|(i, _)| work.row_family[i])
                    .collect();
                fams.sort_unstable();
                fams.dedup();
                return Err(SipError::Infeasible {
                    families: fams.iter().map(|&f| set.constraints()[f].to_string()).collect(),
                });
            }
        }
        let poly = Polynomial::new(Arc::clone(&basis), sol.w.clone())?;
        let field = PolynomialField::new(&poly, set)?;
        let found = search_all(&field, &cfg.search, cfg.seed.wrapping_add(iter as u64));
        let family_max: Vec<f64> = found
            .iter()
            .map(|v| v.first().map_or(f64::NEG_INFINITY, |p| p.value))
            .collect();
        let max_violation = family_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if let Some(prev) = log.last() {
            if sol.objective < prev.objective - 1e-9 * (1.0 + prev.objective.abs()) {
                log::warn!(
                    "objective decreased from {} to {} at iteration {iter}",
                    prev.objective,
                    sol.objective
                );
            }
        }
        let rec = IterationRecord {
            iter,
            objective: sol.objective,
            max_violation,
            n_constraints: work.solver.n_constraints(),
            family_max,
        };
        on_iter(&rec);
        log.push(rec);

        let mut added = 0;
        if max_violation <= cfg.eps_feas {
            let report = certify_field(&field, set, &names, &cert_cfg);
            if report.pass {
                return Ok(SipOutcome {
                    model: PolynomialModel::new(transform, poly)?,
                    objective: sol.objective,
                    log,
                    certification: report,
                    converged: true,
                    working_sets: work.points,
                });
            }
            for (f, fam) in report.families.iter().enumerate() {
                if !fam.pass {
                    work.add(f, &fam.argmax)?;
                    added += 1;
                }
            }
            last = Some((poly, sol.objective, Some(report)));
        } else {
            for (f, cands) in found.iter().enumerate() {
                for c in cands
                    .iter()
                    .filter(|c| c.value > cfg.eps_feas)
                    .take(cfg.add_per_family)
                {
                    work.add(f, &c.point)?;
                    added += 1;
                }
            }
            last = Some((poly, sol.objective, None));
        }
        if added == 0 {
            break;
        }
    }
    let (poly, objective, report) = last.expect("at least one outer iteration");
    let field = PolynomialField::new(&poly, set)?;
    let certification = report.unwrap_or_else(|| certify_field(&field, set, &names, &cert_cfg));
    Ok(SipOutcome {
        model: PolynomialModel::new(transform, poly)?,
        objective,
        log,
        certification,
        converged: false,
        working_sets: work.points,
    })
}

/// Certifies any trained model. Polynomials use the exact violation field;
/// other models go through their surface derivatives.
pub fn certify_model(model: &TrainedModel, set: &ShapeConstraintSet, cfg: &CertifyConfig) -> Result<CertificationReport, SipError> {
    if set.dim() != model.dim() {
        return Err(SipError::DimMismatch {
            set: set.dim(),
            data: model.dim(),
        });
    }
    let names = model.transform().input_box().names();
    Ok(match model {
        TrainedModel::Polynomial(m) => {
            let field = PolynomialField::new(m.polynomial(), set)?;
            certify_field(&field, set, names, cfg)
        }
        TrainedModel::Gpr(_) => {
            let field = SurfaceField::new(model.surface(), set);
            certify_field(&field, set, names, cfg)
        }
    })
}

/// Unconstrained least squares with the same basis and regularization floor.
pub fn unconstrained_fit(data: &Dataset, degree: usize, transform: TransformKind, eps_reg: Option<f64>) -> Result<PolynomialModel, SipError> {
    let t = InputTransform::new(transform, data.input_box().clone())?;
    let basis = Arc::new(MonomialBasis::new(data.dim(), degree)?);
    let a = design_matrix(&basis, &t.forward_all(data.inputs()));
    let y = DVector::from_column_slice(data.outputs());
    let solver = QpSolver::new(&a, &y, eps_reg)?;
    let poly = Polynomial::new(basis, solver.unconstrained().to_vec())?;
    Ok(PolynomialModel::new(t, poly)?)
}
