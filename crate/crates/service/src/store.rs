//! In-memory state mirrored to files under the service directory.
//!
//! ```text
//! <dir>/datasets/<id>.csv
//! <dir>/models/<id>.json                 model artifact, served verbatim
//! <dir>/models/<id>.certification.json
//! <dir>/sessions/<id>.json
//! <dir>/jobs/<id>.json                   written when a job settles
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use siascor::artifact::{write_atomic, ModelArtifact};
use siascor::constraints::ConstraintSpec;
use siascor::domain::{infer_schema, parse_dataset, dataset_to_csv, Dataset};
use siascor::model::TrainedModel;
use siascor::sip::IterationRecord;
use siascor::violation::CertificationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    FitInitial,
    TrainSiascor,
    FitGpr,
    Compare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub session_id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub log: Vec<IterationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Job {
    /// Moves forward only; a settled job stays settled.
    pub fn advance(&mut self, to: JobStatus) {
        if to > self.status && self.status < JobStatus::Done {
            self.status = to;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub dataset_id: String,
    pub initial_model: Option<String>,
    pub constraints: Option<Vec<ConstraintSpec>>,
    /// Constrained model versions, oldest first.
    pub siascor_models: Vec<String>,
    pub gpr_models: Vec<String>,
    pub jobs: Vec<String>,
    pub running_job: Option<String>,
}

pub struct StoredModel {
    pub artifact: ModelArtifact,
    /// Exact file contents.
    pub text: String,
    pub model: TrainedModel,
    pub certification: Option<CertificationReport>,
}

pub struct Store {
    dir: PathBuf,
    next_id: u64,
    pub datasets: BTreeMap<String, Dataset>,
    pub sessions: BTreeMap<String, Session>,
    pub models: BTreeMap<String, StoredModel>,
    pub jobs: BTreeMap<String, Job>,
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct StoreError(pub String);

fn err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> StoreError + '_ {
    move |e| StoreError(format!("{}: {e}", path.display()))
}

fn numeric_suffix(id: &str) -> u64 {
    id.trim_start_matches(|c: char| c.is_ascii_alphabetic())
        .parse()
        .unwrap_or(0)
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for e in fs::read_dir(dir).map_err(err(dir))? {
        let p = e.map_err(err(dir))?.path();
        out.push(p);
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_name()
        .and_then(|n| n.to_str())
        .and_then(|n| n.split('.').next())
        .unwrap_or("")
        .to_string()
}

impl Store {
    /// Opens (or creates) a service directory and reloads whatever it holds.
    /// Jobs that were still running when the previous process stopped are
    /// marked failed.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        for sub in ["datasets", "models", "sessions", "jobs"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(err(&p))?;
        }
        let mut s = Store {
            dir: dir.to_path_buf(),
            next_id: 1,
            datasets: BTreeMap::new(),
            sessions: BTreeMap::new(),
            models: BTreeMap::new(),
            jobs: BTreeMap::new(),
        };
        for p in json_files(&dir.join("datasets"))? {
            let text = fs::read_to_string(&p).map_err(err(&p))?;
            let schema = infer_schema(&text, None).map_err(err(&p))?;
            let data = parse_dataset(&text, &schema, &p.display().to_string()).map_err(err(&p))?;
            s.datasets.insert(stem(&p), data);
        }
        for p in json_files(&dir.join("models"))? {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.ends_with(".certification.json") {
                continue;
            }
            let text = fs::read_to_string(&p).map_err(err(&p))?;
            let artifact = ModelArtifact::from_json(&text).map_err(err(&p))?;
            let model = artifact.to_model().map_err(err(&p))?;
            let id = stem(&p);
            let cp = dir.join("models").join(format!("{id}.certification.json"));
            let certification = if cp.exists() {
                let t = fs::read_to_string(&cp).map_err(err(&cp))?;
                Some(serde_json::from_str(&t).map_err(err(&cp))?)
            } else {
                None
            };
            s.models.insert(
                id,
                StoredModel {
                    artifact,
                    text,
                    model,
                    certification,
                },
            );
        }
        for p in json_files(&dir.join("jobs"))? {
            let t = fs::read_to_string(&p).map_err(err(&p))?;
            let job: Job = serde_json::from_str(&t).map_err(err(&p))?;
            s.jobs.insert(job.id.clone(), job);
        }
        for p in json_files(&dir.join("sessions"))? {
            let t = fs::read_to_string(&p).map_err(err(&p))?;
            let mut sess: Session = serde_json::from_str(&t).map_err(err(&p))?;
            if let Some(j) = sess.running_job.take() {
                let job = s.jobs.entry(j.clone()).or_insert_with(|| Job {
                    id: j.clone(),
                    session_id: sess.id.clone(),
                    kind: JobKind::FitInitial,
                    status: JobStatus::Queued,
                    log: Vec::new(),
                    model_id: None,
                    report: None,
                    error: None,
                });
                if job.status < JobStatus::Done {
                    job.status = JobStatus::Failed;
                    job.error = Some("interrupted by a service restart".into());
                }
            }
            s.sessions.insert(sess.id.clone(), sess);
        }
        let ids = s
            .datasets
            .keys()
            .chain(s.sessions.keys())
            .chain(s.models.keys())
            .chain(s.jobs.keys());
        s.next_id = ids.map(|k| numeric_suffix(k)).max().unwrap_or(0) + 1;
        let interrupted: Vec<String> = s
            .jobs
            .values()
            .filter(|j| j.status == JobStatus::Failed)
            .map(|j| j.id.clone())
            .collect();
        for j in interrupted {
            s.persist_job(&j)?;
        }
        let ids: Vec<String> = s.sessions.keys().cloned().collect();
        for id in ids {
            s.persist_session(&id)?;
        }
        Ok(s)
    }

    pub fn fresh_id(&mut self, prefix: &str) -> String {
        let id = format!("{prefix}{}", self.next_id);
        self.next_id += 1;
        id
    }

    fn write(&self, rel: PathBuf, bytes: &[u8]) -> Result<(), StoreError> {
        let p = self.dir.join(rel);
        write_atomic(&p, bytes).map_err(|e| StoreError(e.to_string()))
    }

    pub fn add_dataset(&mut self, data: Dataset) -> Result<String, StoreError> {
        let id = self.fresh_id("d");
        self.write(PathBuf::from(format!("datasets/{id}.csv")), dataset_to_csv(&data).as_bytes())?;
        self.datasets.insert(id.clone(), data);
        Ok(id)
    }

    pub fn add_model(
        &mut self,
        artifact: ModelArtifact,
        certification: Option<CertificationReport>,
    ) -> Result<String, StoreError> {
        let id = self.fresh_id("m");
        let text = artifact.to_json();
        let model = artifact.to_model().map_err(|e| StoreError(e.to_string()))?;
        self.write(PathBuf::from(format!("models/{id}.json")), text.as_bytes())?;
        if let Some(c) = &certification {
            let mut t = serde_json::to_string_pretty(c).expect("report serializes");
            t.push('\n');
            self.write(PathBuf::from(format!("models/{id}.certification.json")), t.as_bytes())?;
        }
        self.models.insert(
            id.clone(),
            StoredModel {
                artifact,
                text,
                model,
                certification,
            },
        );
        Ok(id)
    }

    pub fn persist_session(&self, id: &str) -> Result<(), StoreError> {
        let s = &self.sessions[id];
        let t = serde_json::to_string_pretty(s).expect("session serializes");
        self.write(PathBuf::from(format!("sessions/{id}.json")), t.as_bytes())
    }

    pub fn persist_job(&self, id: &str) -> Result<(), StoreError> {
        let j = &self.jobs[id];
        let t = serde_json::to_string_pretty(j).expect("job serializes");
        self.write(PathBuf::from(format!("jobs/{id}.json")), t.as_bytes())
    }
}
