//! Latent-space distribution shift between training subjects and the
//! held-out subject, measured with the first-order Wasserstein distance.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::windows_tensor;
use crate::nn::{Network, Tensor};
use crate::segmentation::WindowedSample;

/// W1 between two empirical distributions on the real line, computed as
/// `∫ |F_a(x) - F_b(x)| dx` over the merged sorted support.
pub fn wasserstein_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidArgument("wasserstein_1d needs two non-empty samples".into()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("wasserstein_1d got a non-finite value".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let mut grid: Vec<f64> = a.iter().chain(&b).copied().collect();
    grid.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut total = 0.0;
    for k in 0..grid.len() - 1 {
        let x = grid[k];
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        total += (i as f64 / na - j as f64 / nb).abs() * (grid[k + 1] - x);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LatentDistance {
    /// Mean over latent dimensions of the per-dimension W1.
    PerDimension,
    /// Mean W1 over seeded random unit projections.
    Sliced { projections: usize, seed: u64 },
}

impl Default for LatentDistance {
    fn default() -> Self {
        LatentDistance::PerDimension
    }
}

/// Distance between two `[n, d]` latent sets.
pub fn latent_distance(a: &Tensor, b: &Tensor, method: LatentDistance) -> Result<f64> {
    if a.shape.len() != 2 || b.shape.len() != 2 || a.shape[1] != b.shape[1] {
        return Err(Error::Shape(format!("latent sets {:?} and {:?}", a.shape, b.shape)));
    }
    let d = a.shape[1];
    let column = |t: &Tensor, dir: &[f64]| -> Vec<f64> {
        (0..t.batch())
            .map(|i| t.row(i).iter().zip(dir).map(|(x, w)| x * w).sum())
            .collect()
    };
    match method {
        LatentDistance::PerDimension => {
            let mut sum = 0.0;
            for j in 0..d {
                let ca: Vec<f64> = (0..a.batch()).map(|i| a.row(i)[j]).collect();
                let cb: Vec<f64> = (0..b.batch()).map(|i| b.row(i)[j]).collect();
                sum += wasserstein_1d(&ca, &cb)?;
            }
            Ok(sum / d as f64)
        }
        LatentDistance::Sliced { projections, seed } => {
            if projections == 0 {
                return Err(Error::InvalidArgument("sliced distance needs projections".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut sum = 0.0;
            for _ in 0..projections {
                let mut dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                dir.iter_mut().for_each(|v| *v /= norm);
                sum += wasserstein_1d(&column(a, &dir), &column(b, &dir))?;
            }
            Ok(sum / projections as f64)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShiftOptions {
    pub per_activity: bool,
    pub method: LatentDistance,
}

/// Train-vs-test latent distances for one encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentShift {
    /// All windows pooled across activities.
    pub overall: f64,
    /// Indexed by class; `None` when the class is missing on either side.
    pub per_activity: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
}

fn embed(f: &Network, windows: &[&WindowedSample]) -> Result<Tensor> {
    let mut parts = Vec::new();
    for chunk in windows.chunks(256) {
        parts.push(f.forward(&windows_tensor(chunk)?)?);
    }
    Tensor::stack(&parts.iter().collect::<Vec<_>>())
}

fn rows(t: &Tensor, idx: &[usize]) -> Tensor {
    let mut data = Vec::with_capacity(idx.len() * t.sample_len());
    for &i in idx {
        data.extend_from_slice(t.row(i));
    }
    Tensor { data, shape: vec![idx.len(), t.shape[1]] }
}

/// Embed both window sets with `f` and measure their distance, overall and
/// (optionally) per activity over `classes` classes.
pub fn latent_shift(
    f: &Network,
    train: &[WindowedSample],
    test: &[WindowedSample],
    classes: usize,
    opts: ShiftOptions,
) -> Result<LatentShift> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("latent_shift needs train and test windows".into()));
    }
    let zt = embed(f, &train.iter().collect::<Vec<_>>())?;
    let zs = embed(f, &test.iter().collect::<Vec<_>>())?;
    let overall = latent_distance(&zt, &zs, opts.method)?;
    let mut per_activity = vec![None; classes];
    let mut skipped = Vec::new();
    if opts.per_activity {
        for (k, slot) in per_activity.iter_mut().enumerate() {
            let it: Vec<usize> = (0..train.len()).filter(|&i| train[i].y == k).collect();
            let is: Vec<usize> = (0..test.len()).filter(|&i| test[i].y == k).collect();
            if it.is_empty() || is.is_empty() {
                skipped.push(k);
                continue;
            }
            *slot = Some(latent_distance(&rows(&zt, &it), &rows(&zs, &is), opts.method)?);
        }
    }
    Ok(LatentShift { overall, per_activity, skipped })
}

/// `(d2 - d3) / d2 * 100`; positive means the distance shrank.
pub fn percent_change(d2: f64, d3: f64) -> Option<f64> {
    (d2 > 0.0).then(|| (d2 - d3) / d2 * 100.0)
}

/// Step-2 versus step-3 distances averaged over folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub n_folds: usize,
    pub overall_step2: f64,
    pub overall_step3: f64,
    pub overall_change_pct: Option<f64>,
    pub per_activity_step2: Vec<Option<f64>>,
    pub per_activity_step3: Vec<Option<f64>>,
    pub per_activity_change_pct: Vec<Option<f64>>,
    /// Folds whose overall distance went down.
    pub folds_reduced: usize,
}

fn mean_present(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Average per-fold shifts (paired by position) and express the change.
pub fn shift_delta(step2: &[LatentShift], step3: &[LatentShift]) -> Result<ShiftReport> {
    if step2.is_empty() || step2.len() != step3.len() {
        return Err(Error::InvalidArgument(format!(
            "mismatched fold sets: {} vs {}",
            step2.len(),
            step3.len()
        )));
    }
    let k = step2[0].per_activity.len();
    if step2.iter().chain(step3).any(|s| s.per_activity.len() != k) {
        return Err(Error::InvalidArgument("fold shifts disagree on class count".into()));
    }
    let n = step2.len() as f64;
    let overall_step2 = step2.iter().map(|s| s.overall).sum::<f64>() / n;
    let overall_step3 = step3.iter().map(|s| s.overall).sum::<f64>() / n;
    let per_activity_step2: Vec<Option<f64>> = (0..k).map(|c| mean_present(step2.iter().map(|s| s.per_activity[c]))).collect();
    let per_activity_step3: Vec<Option<f64>> = (0..k).map(|c| mean_present(step3.iter().map(|s| s.per_activity[c]))).collect();
    let per_activity_change_pct = per_activity_step2
        .iter()
        .zip(&per_activity_step3)
        .map(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => percent_change(*a, *b),
            _ => None,
        })
        .collect();
    Ok(ShiftReport {
        n_folds: step2.len(),
        overall_step2,
        overall_step3,
        overall_change_pct: percent_change(overall_step2, overall_step3),
        per_activity_step2,
        per_activity_step3,
        per_activity_change_pct,
        folds_reduced: step2.iter().zip(step3).filter(|(a, b)| b.overall < a.overall).count(),
    })
}
