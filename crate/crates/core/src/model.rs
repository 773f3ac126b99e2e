//! Trained models: prediction in original units, evaluation in transformed ones.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::InputTransform;
use crate::gpr::GprModel;
use crate::polybasis::{BasisError, MonomialBasis, Polynomial};
use crate::violation::Surface;

/// `w^T phi(T(x))` for an input transform `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialModel {
    transform: InputTransform,
    poly: Polynomial,
}

/// Serialized coefficient block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialPayload {
    pub dim: usize,
    pub degree: usize,
    pub coefficients: Vec<f64>,
}

impl PolynomialModel {
    pub fn new(transform: InputTransform, poly: Polynomial) -> Result<Self, BasisError> {
        if poly.dim() != transform.dim() {
            return Err(BasisError::DimensionMismatch {
                poly: poly.dim(),
                transform: transform.dim(),
            });
        }
        Ok(PolynomialModel { transform, poly })
    }

    pub fn from_coefficients(transform: InputTransform, degree: usize, coeffs: Vec<f64>) -> Result<Self, BasisError> {
        let basis = Arc::new(MonomialBasis::new(transform.dim(), degree)?);
        PolynomialModel::new(transform, Polynomial::new(basis, coeffs)?)
    }

    pub fn transform(&self) -> &InputTransform {
        &self.transform
    }

    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    pub fn degree(&self) -> usize {
        self.poly.basis().degree()
    }

    pub fn coefficients(&self) -> &[f64] {
        self.poly.coeffs()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.poly.eval(&self.transform.forward(x))
    }

    pub fn payload(&self) -> PolynomialPayload {
        PolynomialPayload {
            dim: self.poly.dim(),
            degree: self.degree(),
            coefficients: self.poly.coeffs().to_vec(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum TrainedModel {
    Polynomial(PolynomialModel),
    Gpr(GprModel),
}

impl TrainedModel {
    pub fn transform(&self) -> &InputTransform {
        match self {
            TrainedModel::Polynomial(m) => m.transform(),
            TrainedModel::Gpr(m) => m.transform(),
        }
    }

    pub fn dim(&self) -> usize {
        self.transform().dim()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            TrainedModel::Polynomial(m) => m.predict(x),
            TrainedModel::Gpr(m) => m.predict_mean(x),
        }
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    /// The model as a function of transformed coordinates.
    pub fn surface(&self) -> &dyn Surface {
        match self {
            TrainedModel::Polynomial(m) => m.polynomial(),
            TrainedModel::Gpr(m) => m,
        }
    }

    pub fn as_polynomial(&self) -> Option<&PolynomialModel> {
        match self {
            TrainedModel::Polynomial(m) => Some(m),
            TrainedModel::Gpr(_) => None,
        }
    }
}
