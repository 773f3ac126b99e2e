//! Versioned, checksummed model files.
//!
//! A model file is JSON with fields `schema_version`, `kind`, `transform`,
//! `payload`, `provenance` and `checksum`. The checksum is the SHA-256 of the
//! compact serialization of the other five fields, so any edit to the file
//! is caught on load.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::domain::InputTransform;
use crate::gpr::{GprModel, GprPayload};
use crate::model::{PolynomialModel, PolynomialPayload, TrainedModel};

pub const SCHEMA_VERSION: &str = "siascor-model/v1";

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("unsupported schema version `{0}` (expected `{SCHEMA_VERSION}`)")]
    UnknownVersion(String),
    #[error("checksum mismatch: file says {stored}, content hashes to {computed}")]
    ChecksumMismatch { stored: String, computed: String },
    #[error("malformed model file: {0}")]
    Json(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("payload does not match kind `{kind:?}`: {reason}")]
    Payload { kind: ModelKind, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LassoInitial,
    Siascor,
    Gpr,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::LassoInitial => "lasso_initial",
            ModelKind::Siascor => "siascor",
            ModelKind::Gpr => "gpr",
        }
    }
}

#[derive(Serialize)]
struct Body<'a> {
    schema_version: &'a str,
    kind: ModelKind,
    transform: &'a InputTransform,
    payload: &'a Value,
    provenance: &'a BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema_version: String,
    pub kind: ModelKind,
    pub transform: InputTransform,
    pub payload: Value,
    pub provenance: BTreeMap<String, Value>,
    pub checksum: String,
}

impl ModelArtifact {
    pub fn new(kind: ModelKind, model: &TrainedModel, provenance: BTreeMap<String, Value>) -> Self {
        let payload = match model {
            TrainedModel::Polynomial(m) => serde_json::to_value(m.payload()),
            TrainedModel::Gpr(m) => serde_json::to_value(m.payload()),
        }
        .expect("payload serializes");
        let mut a = ModelArtifact {
            schema_version: SCHEMA_VERSION.to_string(),
            kind,
            transform: model.transform().clone(),
            payload,
            provenance,
            checksum: String::new(),
        };
        a.checksum = a.compute_checksum();
        a
    }

    pub fn compute_checksum(&self) -> String {
        let body = Body {
            schema_version: &self.schema_version,
            kind: self.kind,
            transform: &self.transform,
            payload: &self.payload,
            provenance: &self.provenance,
        };
        let bytes = serde_json::to_vec(&body).expect("body serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_model(&self) -> Result<TrainedModel, ArtifactError> {
        let bad = |reason: String| ArtifactError::Payload {
            kind: self.kind,
            reason,
        };
        match self.kind {
            ModelKind::LassoInitial | ModelKind::Siascor => {
                let p: PolynomialPayload = serde_json::from_value(self.payload.clone()).map_err(|e| bad(e.to_string()))?;
                if p.dim != self.transform.dim() {
                    return Err(bad(format!("payload dim {} vs transform dim {}", p.dim, self.transform.dim())));
                }
                let m = PolynomialModel::from_coefficients(self.transform.clone(), p.degree, p.coefficients)
                    .map_err(|e| bad(e.to_string()))?;
                Ok(TrainedModel::Polynomial(m))
            }
            ModelKind::Gpr => {
                let p: GprPayload = serde_json::from_value(self.payload.clone()).map_err(|e| bad(e.to_string()))?;
                let m = GprModel::from_payload(self.transform.clone(), p).map_err(|e| bad(e.to_string()))?;
                Ok(TrainedModel::Gpr(m))
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("artifact serializes");
        s.push('\n');
        s
    }

    /// Parses and validates version and checksum.
    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        let raw: Value = serde_json::from_str(text).map_err(|e| ArtifactError::Json(e.to_string()))?;
        let version = raw
            .get("schema_version")
            .and_then(Value::as_str)
            .ok_or_else(|| ArtifactError::Json("missing schema_version".into()))?;
        if version != SCHEMA_VERSION {
            return Err(ArtifactError::UnknownVersion(version.to_string()));
        }
        let a: ModelArtifact = serde_json::from_value(raw).map_err(|e| ArtifactError::Json(e.to_string()))?;
        let computed = a.compute_checksum();
        if computed != a.checksum {
            return Err(ArtifactError::ChecksumMismatch {
                stored: a.checksum.clone(),
                computed,
            });
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<(), ArtifactError> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, ArtifactError> {
        let text = std::fs::read_to_string(path).map_err(|e| ArtifactError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        ModelArtifact::from_json(&text)
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ArtifactError> {
    let io = |e: std::io::Error| ArtifactError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{InputBox, TransformKind};

    fn lasso_like() -> TrainedModel {
        let t = InputTransform::new(TransformKind::SqrtThenUnitScale, InputBox::brushing()).unwrap();
        let p = crate::polybasis::MonomialBasis::new(5, 2).unwrap().len();
        let coeffs = (0..p).map(|k| 0.01 * (k as f64 + 0.5).sin()).collect();
        TrainedModel::Polynomial(PolynomialModel::from_coefficients(t, 2, coeffs).unwrap())
    }

    #[test]
    fn round_trip_keeps_coefficients_and_seed() {
        let m = lasso_like();
        let mut prov = BTreeMap::new();
        prov.insert("seed".to_string(), Value::from(7));
        let a = ModelArtifact::new(ModelKind::Siascor, &m, prov);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        a.save(&path).unwrap();
        let back = ModelArtifact::load(&path).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.provenance["seed"], Value::from(7));
        let m2 = back.to_model().unwrap();
        assert_eq!(
            m.as_polynomial().unwrap().coefficients(),
            m2.as_polynomial().unwrap().coefficients()
        );
    }

    #[test]
    fn foreign_version_and_tampering_are_rejected() {
        let a = ModelArtifact::new(ModelKind::LassoInitial, &lasso_like(), BTreeMap::new());
        let text = a.to_json().replace(SCHEMA_VERSION, "v999");
        assert!(matches!(ModelArtifact::from_json(&text), Err(ArtifactError::UnknownVersion(v)) if v == "v999"));
        let mut edited = a.clone();
        edited.payload["coefficients"][0] = Value::from(1.0);
        assert!(matches!(
            ModelArtifact::from_json(&edited.to_json()),
            Err(ArtifactError::ChecksumMismatch { .. })
        ));
    }
}
