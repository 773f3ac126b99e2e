//! Background training jobs. Each job runs on the blocking pool and reports
//! iteration records into the shared store as it goes.

use serde::Deserialize;
use serde_json::Value;
use siascor::artifact::ModelArtifact;
use siascor::constraints::ShapeConstraintSet;
use siascor::domain::{Dataset, TransformKind};
use siascor::gpr::GprConfig;
use siascor::pipeline::{compare, gpr_artifact, initial_artifact, siascor_artifact, CompareConfig, CompareModel};
use siascor::regression::RegressionConfig;
use siascor::sip::{certify_model, SipConfig};
use siascor::violation::{CertificationReport, CertifyConfig};

use crate::store::{JobKind, JobStatus};
use crate::AppState;

#[derive(Debug, Clone, Deserialize)]
pub struct JobRequest {
    pub kind: JobKind,
    #[serde(default)]
    pub config: Value,
    /// Budget for certifying unconstrained models against the session's
    /// constraints. Constrained training always certifies at full budget.
    #[serde(default = "quick_certify")]
    pub certify: CertifyConfig,
}

fn quick_certify() -> CertifyConfig {
    CertifyConfig {
        n_points: 100_000,
        ..CertifyConfig::default()
    }
}

/// Parsed configuration, checked before the job is accepted.
pub enum JobPlan {
    FitInitial(RegressionConfig),
    TrainSiascor(SipConfig),
    FitGpr(GprConfig),
    Compare(CompareConfig),
}

impl JobPlan {
    pub fn parse(kind: JobKind, config: &Value) -> Result<Self, String> {
        let cfg = if config.is_null() {
            Value::Object(Default::default())
        } else {
            config.clone()
        };
        let bad = |e: serde_json::Error| format!("invalid {kind:?} config: {e}");
        Ok(match kind {
            JobKind::FitInitial => JobPlan::FitInitial(serde_json::from_value(cfg).map_err(bad)?),
            JobKind::TrainSiascor => JobPlan::TrainSiascor(serde_json::from_value(cfg).map_err(bad)?),
            JobKind::FitGpr => JobPlan::FitGpr(serde_json::from_value(cfg).map_err(bad)?),
            JobKind::Compare => JobPlan::Compare(serde_json::from_value(cfg).map_err(bad)?),
        })
    }

    pub fn needs_constraints(&self) -> bool {
        match self {
            JobPlan::TrainSiascor(_) => true,
            JobPlan::Compare(c) => c.models.contains(&CompareModel::Siascor),
            _ => false,
        }
    }
}

enum Outcome {
    Model {
        artifact: ModelArtifact,
        certification: Option<CertificationReport>,
    },
    Report(Value),
}

fn certify_if(artifact: &ModelArtifact, set: Option<&ShapeConstraintSet>, cfg: &CertifyConfig) -> Result<Option<CertificationReport>, String> {
    let Some(set) = set else { return Ok(None) };
    let model = artifact.to_model().map_err(|e| e.to_string())?;
    certify_model(&model, set, cfg).map(Some).map_err(|e| e.to_string())
}

fn execute(
    state: &AppState,
    job_id: &str,
    plan: JobPlan,
    certify: CertifyConfig,
    data: &Dataset,
    set: Option<&ShapeConstraintSet>,
) -> Result<Outcome, String> {
    match plan {
        JobPlan::FitInitial(cfg) => {
            let (artifact, _) = initial_artifact(data, &cfg).map_err(|e| e.to_string())?;
            let certification = certify_if(&artifact, set, &certify)?;
            Ok(Outcome::Model {
                artifact,
                certification,
            })
        }
        JobPlan::FitGpr(cfg) => {
            let (artifact, _) = gpr_artifact(data, TransformKind::SqrtThenUnitScale, &cfg).map_err(|e| e.to_string())?;
            let certification = certify_if(&artifact, set, &certify)?;
            Ok(Outcome::Model {
                artifact,
                certification,
            })
        }
        JobPlan::TrainSiascor(cfg) => {
            let set = set.expect("checked on submission");
            let (artifact, out) = siascor_artifact(data, set, &cfg, |rec| {
                let mut st = state.lock();
                if let Some(j) = st.jobs.get_mut(job_id) {
                    j.log.push(rec.clone());
                }
            })
            .map_err(|e| e.to_string())?;
            Ok(Outcome::Model {
                artifact,
                certification: Some(out.certification),
            })
        }
        JobPlan::Compare(cfg) => {
            let empty = ShapeConstraintSet::empty(data.dim());
            let report = compare(data, set.unwrap_or(&empty), &cfg).map_err(|e| e.to_string())?;
            Ok(Outcome::Report(serde_json::to_value(&report).expect("report serializes")))
        }
    }
}

/// Body of a job; runs on a blocking thread.
pub fn run(state: AppState, job_id: String, plan: JobPlan, certify: CertifyConfig, data: Dataset, set: Option<ShapeConstraintSet>) {
    let kind = {
        let mut st = state.lock();
        let j = st.jobs.get_mut(&job_id).expect("job registered");
        j.advance(JobStatus::Running);
        j.kind
    };
    let result = execute(&state, &job_id, plan, certify, &data, set.as_ref());
    let mut st = state.lock();
    let session_id = st.jobs[&job_id].session_id.clone();
    let settled = match result {
        Ok(Outcome::Model {
            artifact,
            certification,
        }) => {
            let summary = certification.as_ref().map(|c| {
                serde_json::json!({ "certified": c.pass, "max_violation": c.max_violation() })
            });
            st.add_model(artifact, certification).map(|mid| {
                let sess = st.sessions.get_mut(&session_id).expect("session exists");
                match kind {
                    JobKind::FitInitial => sess.initial_model = Some(mid.clone()),
                    JobKind::TrainSiascor => sess.siascor_models.push(mid.clone()),
                    JobKind::FitGpr => sess.gpr_models.push(mid.clone()),
                    JobKind::Compare => {}
                }
                (Some(mid), summary)
            })
        }
        Ok(Outcome::Report(v)) => Ok((None, Some(v))),
        Err(e) => Err(crate::store::StoreError(e)),
    };
    let j = st.jobs.get_mut(&job_id).expect("job registered");
    match settled {
        Ok((model_id, report)) => {
            j.model_id = model_id;
            j.report = report;
            j.advance(JobStatus::Done);
        }
        Err(e) => {
            log::warn!("job {job_id} failed: {e}");
            j.error = Some(e.0);
            j.advance(JobStatus::Failed);
        }
    }
    if let Some(sess) = st.sessions.get_mut(&session_id) {
        if sess.running_job.as_deref() == Some(job_id.as_str()) {
            sess.running_job = None;
        }
    }
    if let Err(e) = st.persist_job(&job_id).and_then(|_| st.persist_session(&session_id)) {
        log::error!("could not persist job {job_id}: {e}");
    }
}
