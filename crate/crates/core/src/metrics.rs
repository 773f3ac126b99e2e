//! Error metrics and k-fold cross-validation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::Dataset;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} true values, {1} predictions")]
    Length(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("need at least 2 folds, got {0}")]
    TooFewFolds(usize),
    #[error("{k} folds need at least {k} rows, got {n}")]
    TooFewRows { k: usize, n: usize },
}

/// RMSE, MAE and R^2. `r2` is NaN when the true values have zero variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
}

pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<Metrics, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Length(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = y_true.len() as f64;
    // Sorted summation makes the result independent of sample order.
    let sse = sorted_sum(y_true.iter().zip(y_pred).map(|(t, p)| (t - p) * (t - p)));
    let sae = sorted_sum(y_true.iter().zip(y_pred).map(|(t, p)| (t - p).abs()));
    let mean = sorted_sum(y_true.iter().copied()) / n;
    let sst = sorted_sum(y_true.iter().map(|t| (t - mean) * (t - mean)));
    let r2 = if sst > 0.0 {
        1.0 - sse / sst
    } else {
        log::warn!("R^2 undefined: true values have zero variance");
        f64::NAN
    };
    Ok(Metrics {
        rmse: (sse / n).sqrt(),
        mae: sae / n,
        r2,
    })
}

fn sorted_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.iter().sum()
}

/// Shuffles `0..n` with `seed` and deals the indices round-robin into `k`
/// folds; each fold is returned sorted.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, MetricsError> {
    if k < 2 {
        return Err(MetricsError::TooFewFolds(k));
    }
    if n < k {
        return Err(MetricsError::TooFewRows { k, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Indices not in `fold`, ascending.
pub fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut mask = vec![true; n];
    for &i in fold {
        mask[i] = false;
    }
    (0..n).filter(|&i| mask[i]).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: Option<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Held-out prediction for one row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeldOut {
    pub index: usize,
    pub fold: usize,
    pub measured: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub model: String,
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    /// Unweighted average over the completed folds.
    pub mean: Metrics,
    /// Metrics over all held-out predictions at once.
    pub pooled: Metrics,
    pub predictions: Vec<HeldOut>,
}

impl CvReport {
    pub fn failed_folds(&self) -> usize {
        self.folds.iter().filter(|f| f.error.is_some()).count()
    }
}

pub type Predictor = Box<dyn Fn(&[f64]) -> f64>;

/// Trains on `k - 1` folds and scores the held-out fold, for every fold in
/// order. A failing trainer marks its fold failed; the means then cover the
/// completed folds only.
pub fn kfold_cv<F>(data: &Dataset, mut trainer: F, k: usize, seed: u64, model: &str) -> Result<CvReport, MetricsError>
where
    F: FnMut(&Dataset) -> Result<Predictor, String>,
{
    let folds = fold_assignment(data.len(), k, seed)?;
    let mut results = Vec::with_capacity(k);
    let mut predictions = Vec::with_capacity(data.len());
    for (f, test) in folds.iter().enumerate() {
        let train = data.subset(&complement(data.len(), test));
        match trainer(&train) {
            Ok(pred) => {
                let truth: Vec<f64> = test.iter().map(|&i| data.outputs()[i]).collect();
                let guess: Vec<f64> = test.iter().map(|&i| pred(&data.inputs()[i])).collect();
                for ((&i, &t), &p) in test.iter().zip(&truth).zip(&guess) {
                    predictions.push(HeldOut {
                        index: i,
                        fold: f,
                        measured: t,
                        predicted: p,
                    });
                }
                results.push(FoldResult {
                    fold: f,
                    n_test: test.len(),
                    metrics: Some(metrics(&truth, &guess)?),
                    error: None,
                });
            }
            Err(e) => results.push(FoldResult {
                fold: f,
                n_test: test.len(),
                metrics: None,
                error: Some(e),
            }),
        }
    }
    let done: Vec<Metrics> = results.iter().filter_map(|r| r.metrics).collect();
    let avg = |g: fn(&Metrics) -> f64| {
        if done.is_empty() {
            f64::NAN
        } else {
            done.iter().map(g).sum::<f64>() / done.len() as f64
        }
    };
    let mean = Metrics {
        rmse: avg(|m| m.rmse),
        mae: avg(|m| m.mae),
        r2: avg(|m| m.r2),
    };
    predictions.sort_by_key(|h| h.index);
    let pooled = if predictions.is_empty() {
        Metrics {
            rmse: f64::NAN,
            mae: f64::NAN,
            r2: f64::NAN,
        }
    } else {
        let t: Vec<f64> = predictions.iter().map(|h| h.measured).collect();
        let p: Vec<f64> = predictions.iter().map(|h| h.predicted).collect();
        metrics(&t, &p)?
    };
    Ok(CvReport {
        model: model.to_string(),
        k,
        seed,
        folds: results,
        mean,
        pooled,
        predictions,
    })
}

/// `index,fold,measured,predicted` rows for measured-vs-predicted plots.
pub fn predictions_csv(report: &CvReport) -> String {
    let mut out = String::from("index,fold,measured,predicted\n");
    for h in &report.predictions {
        out.push_str(&format!("{},{},{:?},{:?}\n", h.index, h.fold, h.measured, h.predicted));
    }
    out
}
