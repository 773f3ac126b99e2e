//! End-to-end steps shared by the command line and the service: train a
//! model, wrap it in an artifact with provenance, and run the three-model
//! cross-validated comparison.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::artifact::{ModelArtifact, ModelKind};
use crate::constraints::ShapeConstraintSet;
use crate::domain::{dataset_to_csv, DataError, Dataset, InputTransform, TransformKind};
use crate::gpr::{fit_gpr, GprConfig, GprError, StartRecord};
use crate::metrics::{kfold_cv, CvReport, Metrics, MetricsError, Predictor};
use crate::model::TrainedModel;
use crate::regression::{fit_initial_model, InitialFit, RegressionConfig, RegressionError};
use crate::sip::{train_siascor, IterationRecord, SipConfig, SipError, SipOutcome};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Sip(#[from] SipError),
    #[error(transparent)]
    Gpr(#[from] GprError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("constraint set has {set} dimensions, data has {data}")]
    DimMismatch { set: usize, data: usize },
}

/// SHA-256 of the dataset's canonical CSV form.
pub fn dataset_hash(data: &Dataset) -> String {
    hex::encode(Sha256::digest(dataset_to_csv(data).as_bytes()))
}

fn provenance(pairs: Vec<(&str, Value)>) -> BTreeMap<String, Value> {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

pub fn initial_artifact(data: &Dataset, cfg: &RegressionConfig) -> Result<(ModelArtifact, InitialFit), PipelineError> {
    let fit = fit_initial_model(data, cfg)?;
    let best = fit.cv.iter().find(|r| r.lambda == fit.lambda).map(|r| r.mean_rmse);
    let prov = provenance(vec![
        ("seed", json!(cfg.seed)),
        ("degree", json!(cfg.degree)),
        ("penalty", json!(cfg.penalty)),
        ("lambda", json!(fit.lambda)),
        ("cv_folds", json!(cfg.folds)),
        ("cv_rmse", json!(best)),
        ("n_rows", json!(data.len())),
        ("data_sha256", json!(dataset_hash(data))),
    ]);
    let art = ModelArtifact::new(ModelKind::LassoInitial, &TrainedModel::Polynomial(fit.model.clone()), prov);
    Ok((art, fit))
}

pub fn siascor_artifact(
    data: &Dataset,
    set: &ShapeConstraintSet,
    cfg: &SipConfig,
    on_iter: impl FnMut(&IterationRecord),
) -> Result<(ModelArtifact, SipOutcome), PipelineError> {
    let out = train_siascor(data, set, cfg, on_iter)?;
    let prov = provenance(vec![
        ("seed", json!(cfg.seed)),
        ("degree", json!(cfg.degree)),
        ("iterations", json!(out.log.len())),
        ("final_violation", json!(out.certification.max_violation())),
        ("certified", json!(out.certified())),
        ("eps_feas", json!(cfg.eps_feas)),
        ("delta", json!(cfg.delta)),
        ("objective", json!(out.objective)),
        ("constraints", json!(set.to_specs(data.input_box()))),
        ("constraint_hash", json!(set.content_hash())),
        ("n_rows", json!(data.len())),
        ("data_sha256", json!(dataset_hash(data))),
    ]);
    let art = ModelArtifact::new(ModelKind::Siascor, &TrainedModel::Polynomial(out.model.clone()), prov);
    Ok((art, out))
}

pub fn gpr_artifact(
    data: &Dataset,
    transform: TransformKind,
    cfg: &GprConfig,
) -> Result<(ModelArtifact, Vec<StartRecord>), PipelineError> {
    let t = InputTransform::new(transform, data.input_box().clone())?;
    let (model, starts) = fit_gpr(data, &t, cfg)?;
    let prov = provenance(vec![
        ("seed", json!(cfg.seed)),
        ("starts", json!(cfg.starts)),
        ("log_marginal_likelihood", json!(model.log_marginal_likelihood())),
        ("n_rows", json!(data.len())),
        ("data_sha256", json!(dataset_hash(data))),
    ]);
    Ok((ModelArtifact::new(ModelKind::Gpr, &TrainedModel::Gpr(model), prov), starts))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompareModel {
    Lasso,
    Siascor,
    Gpr,
}

impl CompareModel {
    pub const ALL: [CompareModel; 3] = [CompareModel::Lasso, CompareModel::Siascor, CompareModel::Gpr];

    pub fn as_str(&self) -> &'static str {
        match self {
            CompareModel::Lasso => "lasso",
            CompareModel::Siascor => "siascor",
            CompareModel::Gpr => "gpr",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        CompareModel::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompareConfig {
    pub models: Vec<CompareModel>,
    pub folds: usize,
    pub seed: u64,
    pub regression: RegressionConfig,
    pub sip: SipConfig,
    pub gpr: GprConfig,
    pub gpr_transform: TransformKind,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            models: CompareModel::ALL.to_vec(),
            folds: 10,
            seed: 0,
            regression: RegressionConfig::default(),
            sip: SipConfig::default(),
            gpr: GprConfig::default(),
            gpr_transform: TransformKind::SqrtThenUnitScale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub model: String,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub failed_folds: usize,
    pub pooled: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub folds: usize,
    pub seed: u64,
    pub rows: Vec<CompareRow>,
    pub cv: Vec<CvReport>,
}

impl CompareReport {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(|r| r.failed_folds > 0)
    }

    /// One row per model with the fold-mean metrics.
    pub fn table_csv(&self) -> String {
        let mut s = String::from("model,rmse,mae,r2\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.model, r.rmse, r.mae, r.r2));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// k-fold comparison of the selected models on one fold assignment. Every
/// model sees the same folds; inner seeds derive from `cfg.seed`.
pub fn compare(data: &Dataset, set: &ShapeConstraintSet, cfg: &CompareConfig) -> Result<CompareReport, PipelineError> {
    if cfg.models.contains(&CompareModel::Siascor) && set.dim() != data.dim() {
        return Err(PipelineError::DimMismatch {
            set: set.dim(),
            data: data.dim(),
        });
    }
    let mut rows = Vec::new();
    let mut cvs = Vec::new();
    for &m in &cfg.models {
        let report = match m {
            CompareModel::Lasso => {
                let rc = RegressionConfig {
                    seed: cfg.seed,
                    ..cfg.regression.clone()
                };
                kfold_cv(
                    data,
                    |train| {
                        let fit = fit_initial_model(train, &rc).map_err(|e| e.to_string())?;
                        Ok(Box::new(move |x: &[f64]| fit.model.predict(x)) as Predictor)
                    },
                    cfg.folds,
                    cfg.seed,
                    m.as_str(),
                )?
            }
            CompareModel::Siascor => {
                let sc = SipConfig {
                    seed: cfg.seed,
                    ..cfg.sip.clone()
                };
                kfold_cv(
                    data,
                    |train| {
                        let out = train_siascor(train, set, &sc, |_| {}).map_err(|e| e.to_string())?;
                        if !out.certified() {
                            log::warn!("fold model not certified, max violation {}", out.certification.max_violation());
                        }
                        let model = out.model;
                        Ok(Box::new(move |x: &[f64]| model.predict(x)) as Predictor)
                    },
                    cfg.folds,
                    cfg.seed,
                    m.as_str(),
                )?
            }
            CompareModel::Gpr => {
                let gc = GprConfig {
                    seed: cfg.seed,
                    ..cfg.gpr
                };
                kfold_cv(
                    data,
                    |train| {
                        let t = InputTransform::new(cfg.gpr_transform, train.input_box().clone())
                            .map_err(|e| e.to_string())?;
                        let (model, _) = fit_gpr(train, &t, &gc).map_err(|e| e.to_string())?;
                        Ok(Box::new(move |x: &[f64]| model.predict_mean(x)) as Predictor)
                    },
                    cfg.folds,
                    cfg.seed,
                    m.as_str(),
                )?
            }
        };
        rows.push(CompareRow {
            model: m.as_str().to_string(),
            rmse: report.mean.rmse,
            mae: report.mean.mae,
            r2: report.mean.r2,
            failed_folds: report.failed_folds(),
            pooled: report.pooled,
        });
        cvs.push(report);
    }
    Ok(CompareReport {
        folds: cfg.folds,
        seed: cfg.seed,
        rows,
        cv: cvs,
    })
}
