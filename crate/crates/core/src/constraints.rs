//! Shape constraint vocabulary and its linearization in the coefficients.
//!
//! Every constraint family is a set of affine inequalities `c(xi)^T w <= beta(xi)`
//! indexed by points `xi` of the transformed box `[0,1]^d`:
//!
//! | family               | `c(xi)`                                    | `beta` |
//! |----------------------|--------------------------------------------|--------|
//! | upper bound `ub`     | `phi(xi)`                                  | `ub`   |
//! | lower bound `lb`     | `-phi(xi)`                                 | `-lb`  |
//! | increasing in `i`    | `-d_i phi(xi)`                             | 0      |
//! | decreasing in `i`    | `d_i phi(xi)`                              | 0      |
//! | convex in `i`        | `-d_i^2 phi(xi)`                           | 0      |
//! | concave in `i`       | `d_i^2 phi(xi)`                            | 0      |
//! | rebound `(i, r)`     | `phi(xi|1) - r phi(xi|0) - (1-r) phi(xi)`  | 0      |
//!
//! where `phi(xi|c)` is the basis evaluated with coordinate `i` set to `c`.
//!
//! The rebound row needs a word. The constraint asks, for each fixed `x_{-i}`,
//! `f(1) - f* <= r (f(0) - f*)` with `f* = min_t f(t)` along dimension `i`.
//! Rearranged this is `f(1) - r f(0) <= (1 - r) f*`, and since `1 - r >= 0`
//! that holds iff `f(1) - r f(0) <= (1 - r) f(t)` for every `t`. So the inner
//! minimum disappears and the rebound family becomes linear in `w`, with the
//! probe value `t` stored in coordinate `i` of `xi`. The largest row value over
//! `t` equals the min-form violation exactly.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::InputBox;
use crate::polybasis::{BasisError, MonomialBasis, Polynomial};

const POINT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintError {
    #[error("unknown constraint kind `{0}`")]
    UnknownKind(String),
    #[error("constraint `{kind}` needs field `{field}`")]
    MissingField { kind: String, field: &'static str },
    #[error("unknown dimension `{0}`")]
    UnknownDim(String),
    #[error("dimension {dim} out of range for d = {d}")]
    DimOutOfRange { dim: usize, d: usize },
    #[error("rebound factor r = {0} must lie in (0, 1]")]
    BadReboundFactor(f64),
    #[error("bound value {0} is not finite")]
    BadBound(f64),
    #[error("lower bound {lower} exceeds upper bound {upper}")]
    BoundsOrder { lower: f64, upper: f64 },
    #[error("duplicate constraint {0}")]
    Duplicate(String),
    #[error("conflicting constraints on dimension `{dim}`: {first} and {second}")]
    Conflict {
        dim: String,
        first: &'static str,
        second: &'static str,
    },
    #[error("index point {0:?} lies outside the unit box")]
    PointOutsideBox(Vec<f64>),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error("invalid constraint JSON: {0}")]
    Json(String),
}

/// One shape requirement on the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShapeConstraint {
    LowerBound(f64),
    UpperBound(f64),
    MonotoneIncreasing(usize),
    MonotoneDecreasing(usize),
    Convex(usize),
    Concave(usize),
    Rebound { dim: usize, r: f64 },
}

impl ShapeConstraint {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ShapeConstraint::LowerBound(_) => "lower_bound",
            ShapeConstraint::UpperBound(_) => "upper_bound",
            ShapeConstraint::MonotoneIncreasing(_) => "monotone_increasing",
            ShapeConstraint::MonotoneDecreasing(_) => "monotone_decreasing",
            ShapeConstraint::Convex(_) => "convex",
            ShapeConstraint::Concave(_) => "concave",
            ShapeConstraint::Rebound { .. } => "rebound",
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match *self {
            ShapeConstraint::LowerBound(_) | ShapeConstraint::UpperBound(_) => None,
            ShapeConstraint::MonotoneIncreasing(i)
            | ShapeConstraint::MonotoneDecreasing(i)
            | ShapeConstraint::Convex(i)
            | ShapeConstraint::Concave(i)
            | ShapeConstraint::Rebound { dim: i, .. } => Some(i),
        }
    }

    fn with_dim(self, dim: usize) -> Self {
        match self {
            ShapeConstraint::MonotoneIncreasing(_) => ShapeConstraint::MonotoneIncreasing(dim),
            ShapeConstraint::MonotoneDecreasing(_) => ShapeConstraint::MonotoneDecreasing(dim),
            ShapeConstraint::Convex(_) => ShapeConstraint::Convex(dim),
            ShapeConstraint::Concave(_) => ShapeConstraint::Concave(dim),
            ShapeConstraint::Rebound { r, .. } => ShapeConstraint::Rebound { dim, r },
            bound => bound,
        }
    }

    /// Checks the scalar parameters and the dimension against `d`.
    pub fn validate(&self, d: usize) -> Result<(), ConstraintError> {
        match *self {
            ShapeConstraint::LowerBound(v) | ShapeConstraint::UpperBound(v) if !v.is_finite() => {
                return Err(ConstraintError::BadBound(v))
            }
            ShapeConstraint::Rebound { r, .. } if !(r > 0.0 && r <= 1.0) => {
                return Err(ConstraintError::BadReboundFactor(r))
            }
            _ => {}
        }
        match self.dim() {
            Some(i) if i >= d => Err(ConstraintError::DimOutOfRange { dim: i, d }),
            _ => Ok(()),
        }
    }

    /// The affine row `(c, beta)` of this family at index point `xi`.
    pub fn linearize(&self, basis: &MonomialBasis, xi: &[f64]) -> Result<LinearizedConstraint, ConstraintError> {
        self.validate(basis.dim())?;
        check_point(xi, basis.dim())?;
        let phi = basis.eval(xi);
        let n = basis.len();
        let mut coeffs = vec![0.0; n];
        let offset = match *self {
            ShapeConstraint::UpperBound(ub) => {
                coeffs.copy_from_slice(&phi);
                ub
            }
            ShapeConstraint::LowerBound(lb) => {
                coeffs.iter_mut().zip(&phi).for_each(|(c, p)| *c = -p);
                -lb
            }
            ShapeConstraint::MonotoneIncreasing(i) => {
                basis.d1_from_values(&phi, i, &mut coeffs);
                coeffs.iter_mut().for_each(|c| *c = -*c);
                0.0
            }
            ShapeConstraint::MonotoneDecreasing(i) => {
                basis.d1_from_values(&phi, i, &mut coeffs);
                0.0
            }
            ShapeConstraint::Convex(i) => {
                basis.d2_from_values(&phi, i, &mut coeffs);
                coeffs.iter_mut().for_each(|c| *c = -*c);
                0.0
            }
            ShapeConstraint::Concave(i) => {
                basis.d2_from_values(&phi, i, &mut coeffs);
                0.0
            }
            ShapeConstraint::Rebound { dim, r } => {
                let at_upper = basis.eval_substituted(xi, dim, 1.0)?;
                let at_lower = basis.eval_substituted(xi, dim, 0.0)?;
                for k in 0..n {
                    coeffs[k] = at_upper[k] - r * at_lower[k] - (1.0 - r) * phi[k];
                }
                0.0
            }
        };
        Ok(LinearizedConstraint {
            point: xi.to_vec(),
            coeffs,
            offset,
        })
    }

    /// Signed slack `c(xi)^T w - beta(xi)`; positive means violated.
    pub fn violation(&self, w: &[f64], basis: &MonomialBasis, xi: &[f64]) -> Result<f64, ConstraintError> {
        Ok(self.linearize(basis, xi)?.value(w))
    }

    /// The violation as a polynomial in the index point, plus its constant offset:
    /// `violation(xi) = poly(xi) - offset`.
    pub fn violation_polynomial(&self, model: &Polynomial) -> Result<(Polynomial, f64), ConstraintError> {
        self.validate(model.dim())?;
        Ok(match *self {
            ShapeConstraint::UpperBound(ub) => (model.clone(), ub),
            ShapeConstraint::LowerBound(lb) => (model.scale(-1.0), -lb),
            ShapeConstraint::MonotoneIncreasing(i) => (model.derivative(i)?.scale(-1.0), 0.0),
            ShapeConstraint::MonotoneDecreasing(i) => (model.derivative(i)?, 0.0),
            ShapeConstraint::Convex(i) => (model.derivative(i)?.derivative(i)?.scale(-1.0), 0.0),
            ShapeConstraint::Concave(i) => (model.derivative(i)?.derivative(i)?, 0.0),
            ShapeConstraint::Rebound { dim, r } => {
                let hi = model.substitute(dim, 1.0)?;
                let lo = model.substitute(dim, 0.0)?;
                (hi.combine(1.0, &lo, -r).combine(1.0, model, -(1.0 - r)), 0.0)
            }
        })
    }
}

fn check_point(xi: &[f64], d: usize) -> Result<(), ConstraintError> {
    if xi.len() != d
        || xi
            .iter()
            .any(|v| !v.is_finite() || *v < -POINT_SLACK || *v > 1.0 + POINT_SLACK)
    {
        return Err(ConstraintError::PointOutsideBox(xi.to_vec()));
    }
    Ok(())
}

/// `coeffs^T w <= offset` at index point `point`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedConstraint {
    pub point: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub offset: f64,
}

impl LinearizedConstraint {
    pub fn value(&self, w: &[f64]) -> f64 {
        crate::polybasis::dot(&self.coeffs, w) - self.offset
    }
}

/// Wire form of a constraint: `{"kind": ..., "dim": name?, "value": v?, "r": r?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
}

/// A validated, mutually consistent list of shape constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeConstraintSet {
    dim: usize,
    constraints: Vec<ShapeConstraint>,
}

impl ShapeConstraintSet {
    pub fn new(dim: usize, constraints: Vec<ShapeConstraint>) -> Result<Self, ConstraintError> {
        let set = ShapeConstraintSet { dim, constraints };
        set.validate()?;
        Ok(set)
    }

    pub fn empty(dim: usize) -> Self {
        ShapeConstraintSet {
            dim,
            constraints: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn constraints(&self) -> &[ShapeConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    fn validate(&self) -> Result<(), ConstraintError> {
        let mut seen = BTreeSet::new();
        let mut lower = None;
        let mut upper = None;
        for c in &self.constraints {
            c.validate(self.dim)?;
            if !seen.insert((c.kind_name(), c.dim())) {
                return Err(ConstraintError::Duplicate(format!(
                    "{}{}",
                    c.kind_name(),
                    c.dim().map(|i| format!(" on dimension {i}")).unwrap_or_default()
                )));
            }
            match *c {
                ShapeConstraint::LowerBound(v) => lower = Some(v),
                ShapeConstraint::UpperBound(v) => upper = Some(v),
                _ => {}
            }
        }
        if let (Some(l), Some(u)) = (lower, upper) {
            if l > u {
                return Err(ConstraintError::BoundsOrder { lower: l, upper: u });
            }
        }
        for (a, b) in [
            ("monotone_increasing", "monotone_decreasing"),
            ("convex", "concave"),
        ] {
            for i in 0..self.dim {
                if seen.contains(&(a, Some(i))) && seen.contains(&(b, Some(i))) {
                    return Err(ConstraintError::Conflict {
                        dim: i.to_string(),
                        first: a,
                        second: b,
                    });
                }
            }
        }
        Ok(())
    }

    /// Resolves wire-form constraints against the dimension names of `input_box`.
    pub fn from_specs(specs: &[ConstraintSpec], input_box: &InputBox) -> Result<Self, ConstraintError> {
        let mut out = Vec::with_capacity(specs.len());
        for s in specs {
            let dim = || -> Result<usize, ConstraintError> {
                let name = s.dim.as_deref().ok_or_else(|| ConstraintError::MissingField {
                    kind: s.kind.clone(),
                    field: "dim",
                })?;
                input_box
                    .index_of(name)
                    .or_else(|| name.parse::<usize>().ok().filter(|&i| i < input_box.dim()))
                    .ok_or_else(|| ConstraintError::UnknownDim(name.to_string()))
            };
            let value = || {
                s.value.ok_or_else(|| ConstraintError::MissingField {
                    kind: s.kind.clone(),
                    field: "value",
                })
            };
            out.push(match s.kind.as_str() {
                "lower_bound" => ShapeConstraint::LowerBound(value()?),
                "upper_bound" => ShapeConstraint::UpperBound(value()?),
                "monotone_increasing" => ShapeConstraint::MonotoneIncreasing(dim()?),
                "monotone_decreasing" => ShapeConstraint::MonotoneDecreasing(dim()?),
                "convex" => ShapeConstraint::Convex(dim()?),
                "concave" => ShapeConstraint::Concave(dim()?),
                "rebound" => ShapeConstraint::Rebound {
                    dim: dim()?,
                    r: s.r.ok_or_else(|| ConstraintError::MissingField {
                        kind: s.kind.clone(),
                        field: "r",
                    })?,
                },
                other => return Err(ConstraintError::UnknownKind(other.to_string())),
            });
        }
        ShapeConstraintSet::new(input_box.dim(), out).map_err(|e| match e {
            ConstraintError::Conflict { dim, first, second } => ConstraintError::Conflict {
                dim: dim
                    .parse::<usize>()
                    .ok()
                    .and_then(|i| input_box.names().get(i).cloned())
                    .unwrap_or(dim),
                first,
                second,
            },
            other => other,
        })
    }

    pub fn from_json(json: &str, input_box: &InputBox) -> Result<Self, ConstraintError> {
        let specs: Vec<ConstraintSpec> =
            serde_json::from_str(json).map_err(|e| ConstraintError::Json(e.to_string()))?;
        ShapeConstraintSet::from_specs(&specs, input_box)
    }

    pub fn to_specs(&self, input_box: &InputBox) -> Vec<ConstraintSpec> {
        self.constraints
            .iter()
            .map(|c| {
                let dim = c.dim().map(|i| input_box.names()[i].clone());
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
            })
            .collect()
    }

    pub fn to_json(&self, input_box: &InputBox) -> String {
        serde_json::to_string(&self.to_specs(input_box)).expect("constraint specs serialize")
    }

    /// SHA-256 over a name-independent canonical encoding.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("d={};", self.dim));
        for c in &self.constraints {
            let params = match *c {
                ShapeConstraint::LowerBound(v) | ShapeConstraint::UpperBound(v) => format!("{v:?}"),
                ShapeConstraint::Rebound { r, .. } => format!("{r:?}"),
                _ => String::new(),
            };
            h.update(format!(
                "{}:{}:{};",
                c.kind_name(),
                c.dim().map(|i| i.to_string()).unwrap_or_default(),
                params
            ));
        }
        hex::encode(h.finalize())
    }

    /// Re-targets the set from `from` to `to` by dimension name; constraints on
    /// dimensions missing from `to` are dropped.
    pub fn restrict(&self, from: &InputBox, to: &InputBox) -> Result<Self, ConstraintError> {
        let kept = self
            .constraints
            .iter()
            .filter_map(|c| match c.dim() {
                None => Some(*c),
                Some(i) => to.index_of(&from.names()[i]).map(|j| c.with_dim(j)),
            })
            .collect();
        ShapeConstraintSet::new(to.dim(), kept)
    }

    /// Number of statements with a lower/upper bound pair counted once.
    pub fn statement_count(&self) -> usize {
        let bounds = self.constraints.iter().filter(|c| c.dim().is_none()).count();
        self.constraints.len() - bounds + bounds.min(1)
    }
}

impl fmt::Display for ShapeConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ShapeConstraint::LowerBound(v) | ShapeConstraint::UpperBound(v) => {
                write!(f, "{}({v})", self.kind_name())
            }
            ShapeConstraint::Rebound { dim, r } => write!(f, "rebound(dim {dim}, r = {r})"),
            c => write!(f, "{}(dim {})", c.kind_name(), c.dim().unwrap_or(0)),
        }
    }
}

/// The expert constraints for the five-parameter brushing box
/// ([`InputBox::brushing`] dimension order).
pub fn expert_constraint_set() -> ShapeConstraintSet {
    const DIA: usize = 0;
    const T_C: usize = 1;
    const N_B: usize = 2;
    const N_W: usize = 3;
    const A_E: usize = 4;
    ShapeConstraintSet::new(
        5,
        vec![
            ShapeConstraint::LowerBound(0.1),
            ShapeConstraint::UpperBound(0.5),
            ShapeConstraint::MonotoneDecreasing(T_C),
            ShapeConstraint::Convex(T_C),
            ShapeConstraint::Convex(N_B),
            ShapeConstraint::Rebound { dim: N_B, r: 0.5 },
            ShapeConstraint::Convex(N_W),
            ShapeConstraint::Rebound { dim: N_W, r: 0.5 },
            ShapeConstraint::Convex(A_E),
            ShapeConstraint::MonotoneIncreasing(DIA),
        ],
    )
    .expect("expert constraint set is consistent")
}
