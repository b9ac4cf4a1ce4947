use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelBundle;
use crate::segmentation::WindowedSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// `confusion[truth][prediction]`
    pub confusion: Vec<Vec<u64>>,
}

/// Accuracy, macro-F1 over all `k` classes and the confusion matrix. A class
/// with no support and no predictions scores F1 = 0.
pub fn metrics_from_predictions(truth: &[usize], pred: &[usize], k: usize) -> Result<Metrics> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty test set".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!("{} labels vs {} predictions", truth.len(), pred.len())));
    }
    let mut confusion = vec![vec![0u64; k]; k];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= k || p >= k {
            return Err(Error::InvalidArgument(format!("class out of range for K = {k}")));
        }
        confusion[t][p] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let mut f1_sum = 0.0;
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let fp = (0..k).filter(|&r| r != c).map(|r| confusion[r][c]).sum::<u64>() as f64;
        let fn_ = (0..k).filter(|&p| p != c).map(|p| confusion[c][p]).sum::<u64>() as f64;
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }
    Ok(Metrics {
        accuracy: correct as f64 / total as f64,
        macro_f1: f1_sum / k as f64,
        confusion,
    })
}

/// Score a bundle on windows: arg-max of `C(F(x))`, lowest index on ties.
pub fn evaluate(bundle: &ModelBundle, test: &[WindowedSample]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("cannot score an empty test set".into()));
    }
    let refs: Vec<&WindowedSample> = test.iter().collect();
    let pred = bundle.predict(&refs)?;
    let truth: Vec<usize> = test.iter().map(|w| w.y).collect();
    metrics_from_predictions(&truth, &pred, bundle.spec.classes)
}
