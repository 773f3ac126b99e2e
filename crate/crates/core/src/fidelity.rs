//! Anchor points and model slices for inspecting a fitted model.
//!
//! Every point of a full-factorial grid gets a score: the summed Euclidean
//! distance between the grid point with its predicted output and each data
//! point with its measured output. The grid point with the smallest score
//! sits closest to the data (high fidelity), the largest sits farthest (low
//! fidelity). Slices through either anchor vary one or two inputs and hold
//! the rest fixed.

use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, InputBox};
use crate::model::TrainedModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FidelityError {
    #[error("grid needs at least one point per dimension")]
    EmptyGrid,
    #[error("grid would have more than {max} points")]
    GridTooLarge { max: usize },
    #[error("anchor {0:?} is outside the input box")]
    AnchorOutside(Vec<f64>),
    #[error("anchor has {got} coordinates, model has {want}")]
    AnchorShape { got: usize, want: usize },
    #[error("a slice needs one or two distinct free dimensions in range, got {0:?}")]
    FreeDims(Vec<usize>),
    #[error("a slice needs at least 2 samples per free dimension")]
    Samples,
    #[error("data has {data} inputs, model has {model}")]
    DimMismatch { data: usize, model: usize },
}

const MAX_GRID: usize = 10_000_000;

/// Full-factorial grid, `n_per_dim` evenly spaced values per dimension
/// (the midpoint when `n_per_dim == 1`). The last dimension varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct InspectionGrid {
    n_per_dim: usize,
    points: Vec<Vec<f64>>,
}

impl InspectionGrid {
    pub fn new(input_box: &InputBox, n_per_dim: usize) -> Result<Self, FidelityError> {
        if n_per_dim == 0 {
            return Err(FidelityError::EmptyGrid);
        }
        let d = input_box.dim();
        let k = (0..d)
            .try_fold(1usize, |acc, _| acc.checked_mul(n_per_dim))
            .filter(|&k| k <= MAX_GRID)
            .ok_or(FidelityError::GridTooLarge { max: MAX_GRID })?;
        let axis: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                let (lo, hi) = (input_box.lower()[i], input_box.upper()[i]);
                if n_per_dim == 1 {
                    vec![0.5 * (lo + hi)]
                } else {
                    (0..n_per_dim)
                        .map(|j| {
                            if j + 1 == n_per_dim {
                                hi
                            } else {
                                lo + (hi - lo) * j as f64 / (n_per_dim - 1) as f64
                            }
                        })
                        .collect()
                }
            })
            .collect();
        let mut points = Vec::with_capacity(k);
        for mut idx in 0..k {
            let mut p = vec![0.0; d];
            for i in (0..d).rev() {
                p[i] = axis[i][idx % n_per_dim];
                idx /= n_per_dim;
            }
            points.push(p);
        }
        Ok(InspectionGrid { n_per_dim, points })
    }

    /// A grid from explicit points, mostly for tests.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self, FidelityError> {
        if points.is_empty() {
            return Err(FidelityError::EmptyGrid);
        }
        Ok(InspectionGrid { n_per_dim: 0, points })
    }

    pub fn n_per_dim(&self) -> usize {
        self.n_per_dim
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Coordinates in which anchor distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// Inputs mapped linearly onto the unit box, output min-max scaled over
    /// the data and the grid predictions together.
    #[default]
    Unit,
    /// Original units.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPair {
    pub names: Vec<String>,
    pub x_min: Vec<f64>,
    pub x_max: Vec<f64>,
    pub k_min: usize,
    pub k_max: usize,
    pub score_min: f64,
    pub score_max: f64,
    pub scaling: Scaling,
}

/// Per-grid-point accumulated distances to the data.
pub fn anchor_scores(model: &TrainedModel, data: &Dataset, grid: &InspectionGrid, scaling: Scaling) -> Result<Vec<f64>, FidelityError> {
    if data.dim() != model.dim() {
        return Err(FidelityError::DimMismatch {
            data: data.dim(),
            model: model.dim(),
        });
    }
    let b = data.input_box();
    let preds = model.predict_many(grid.points());
    let (in_off, in_scale): (Vec<f64>, Vec<f64>) = match scaling {
        Scaling::Raw => (vec![0.0; b.dim()], vec![1.0; b.dim()]),
        Scaling::Unit => (
            b.lower().to_vec(),
            b.lower().iter().zip(b.upper()).map(|(l, u)| 1.0 / (u - l)).collect(),
        ),
    };
    let (out_off, out_scale) = match scaling {
        Scaling::Raw => (0.0, 1.0),
        Scaling::Unit => {
            let all = data.outputs().iter().chain(&preds);
            let lo = all.clone().copied().fold(f64::INFINITY, f64::min);
            let hi = all.copied().fold(f64::NEG_INFINITY, f64::max);
            (lo, if hi > lo { 1.0 / (hi - lo) } else { 1.0 })
        }
    };
    let scale_x = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(&in_off)
            .zip(&in_scale)
            .map(|((v, o), s)| (v - o) * s)
            .collect()
    };
    let xs: Vec<Vec<f64>> = data.inputs().iter().map(|x| scale_x(x)).collect();
    let ys: Vec<f64> = data.outputs().iter().map(|y| (y - out_off) * out_scale).collect();
    Ok(grid
        .points()
        .iter()
        .zip(&preds)
        .map(|(g, p)| {
            let g = scale_x(g);
            let yg = (p - out_off) * out_scale;
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| {
                    let sq: f64 = x.iter().zip(&g).map(|(a, b)| (a - b) * (a - b)).sum();
                    (sq + (y - yg) * (y - yg)).sqrt()
                })
                .sum()
        })
        .collect())
}

pub fn select_anchors(model: &TrainedModel, data: &Dataset, grid: &InspectionGrid, scaling: Scaling) -> Result<AnchorPair, FidelityError> {
    let scores = anchor_scores(model, data, grid, scaling)?;
    let (mut k_min, mut k_max) = (0, 0);
    for (k, &s) in scores.iter().enumerate() {
        if s < scores[k_min] {
            k_min = k;
        }
        if s > scores[k_max] {
            k_max = k;
        }
    }
    Ok(AnchorPair {
        names: data.input_box().names().to_vec(),
        x_min: grid.points()[k_min].clone(),
        x_max: grid.points()[k_max].clone(),
        k_min,
        k_max,
        score_min: scores[k_min],
        score_max: scores[k_max],
        scaling,
    })
}

/// Plot data for a one- or two-dimensional model slice. `xs[s]` holds the
/// free coordinates of sample `s`; with two free dimensions the second one
/// varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSlice {
    pub anchor: Vec<f64>,
    pub free_dims: Vec<usize>,
    pub names: Vec<String>,
    pub samples: usize,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
    pub units: Vec<String>,
}

impl GraphSlice {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("slice serializes");
        s.push('\n');
        s
    }
}

pub fn extract_slice(model: &TrainedModel, anchor: &[f64], free_dims: &[usize], samples: usize) -> Result<GraphSlice, FidelityError> {
    let b = model.transform().input_box();
    let d = b.dim();
    if anchor.len() != d {
        return Err(FidelityError::AnchorShape {
            got: anchor.len(),
            want: d,
        });
    }
    if !b.contains(anchor) {
        return Err(FidelityError::AnchorOutside(anchor.to_vec()));
    }
    let bad_dims = free_dims.is_empty()
        || free_dims.len() > 2
        || free_dims.iter().any(|&i| i >= d)
        || (free_dims.len() == 2 && free_dims[0] == free_dims[1]);
    if bad_dims {
        return Err(FidelityError::FreeDims(free_dims.to_vec()));
    }
    if samples < 2 {
        return Err(FidelityError::Samples);
    }
    let axis = |i: usize| -> Vec<f64> {
        let (lo, hi) = (b.lower()[i], b.upper()[i]);
        (0..samples)
            .map(|j| {
                if j + 1 == samples {
                    hi
                } else {
                    lo + (hi - lo) * j as f64 / (samples - 1) as f64
                }
            })
            .collect()
    };
    let axes: Vec<Vec<f64>> = free_dims.iter().map(|&i| axis(i)).collect();
    let total = samples.pow(free_dims.len() as u32);
    let mut xs = Vec::with_capacity(total);
    let mut ys = Vec::with_capacity(total);
    for s in 0..total {
        let free: Vec<f64> = if free_dims.len() == 1 {
            vec![axes[0][s]]
        } else {
            vec![axes[0][s / samples], axes[1][s % samples]]
        };
        let mut x = anchor.to_vec();
        for (&i, &v) in free_dims.iter().zip(&free) {
            x[i] = v;
        }
        ys.push(model.predict(&x));
        xs.push(free);
    }
    Ok(GraphSlice {
        anchor: anchor.to_vec(),
        free_dims: free_dims.to_vec(),
        names: free_dims.iter().map(|&i| b.names()[i].clone()).collect(),
        samples,
        xs,
        ys,
        units: free_dims.iter().map(|&i| b.units()[i].clone()).collect(),
    })
}

/// One-dimensional slices through both anchors for every input, labelled
/// `high_<name>` and `low_<name>`.
pub fn fidelity_slices(model: &TrainedModel, anchors: &AnchorPair, samples: usize) -> Result<Vec<(String, GraphSlice)>, FidelityError> {
    let mut out = Vec::new();
    for (i, name) in anchors.names.iter().enumerate() {
        out.push((format!("high_{name}"), extract_slice(model, &anchors.x_min, &[i], samples)?));
        out.push((format!("low_{name}"), extract_slice(model, &anchors.x_max, &[i], samples)?));
    }
    Ok(out)
}
