//! Sliding-window segmentation, train-fitted min-max scaling and LOSO folds.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DatasetSpec, RawRecording};
use crate::error::{Error, Result};

/// One labelled window: `x` is `w x c`, `y` the class index, `s` the subject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowedSample {
    pub x: Array2<f64>,
    pub y: usize,
    pub s: u32,
    /// First row of the window inside its source recording.
    pub start: usize,
}

impl WindowedSample {
    pub fn window_len(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_channels(&self) -> usize {
        self.x.ncols()
    }
}

/// Cut `recording` into windows of `spec.window_size` rows. A window is kept
/// only when every row carries the same non-null activity label.
pub fn segment_windows(recording: &RawRecording, spec: &DatasetSpec) -> Vec<WindowedSample> {
    let w = spec.window_size;
    let stride = spec.stride().max(1);
    let t = recording.len();
    if t < w {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + w <= t {
        let labels = &recording.labels[start..start + w];
        let first = labels[0];
        if labels.iter().all(|&l| l == first) {
            if let Some(y) = spec.class_index(first) {
                let x = recording.channels.slice(ndarray::s![start..start + w, ..]).to_owned();
                out.push(WindowedSample {
                    x,
                    y,
                    s: recording.subject_id,
                    start,
                });
            }
        }
        start += stride;
    }
    out
}

pub fn segment_all(recordings: &[RawRecording], spec: &DatasetSpec) -> Vec<WindowedSample> {
    recordings.iter().flat_map(|r| segment_windows(r, spec)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Per-channel min/max over every timestep of every window.
pub fn fit_minmax(train: &[WindowedSample]) -> Result<ScalerParams> {
    let first = train
        .first()
        .ok_or_else(|| Error::InvalidArgument("cannot fit scaler on zero windows".into()))?;
    let c = first.num_channels();
    let mut min = vec![f64::INFINITY; c];
    let mut max = vec![f64::NEG_INFINITY; c];
    for win in train {
        if win.num_channels() != c {
            return Err(Error::InvalidArgument("windows disagree on channel count".into()));
        }
        for row in win.x.rows() {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
    }
    Ok(ScalerParams { min, max })
}

/// `(x - min) / (max - min)` per channel; constant channels map to 0. Values
/// outside the fitted range are not clipped.
pub fn apply_minmax(windows: &[WindowedSample], params: &ScalerParams) -> Result<Vec<WindowedSample>> {
    let c = params.min.len();
    windows
        .iter()
        .map(|win| {
            if win.num_channels() != c {
                return Err(Error::InvalidArgument(format!(
                    "window has {} channels, scaler has {c}",
                    win.num_channels()
                )));
            }
            let mut out = win.clone();
            for mut row in out.x.axis_iter_mut(Axis(0)) {
                for (j, v) in row.iter_mut().enumerate() {
                    let range = params.max[j] - params.min[j];
                    *v = if range > 0.0 { (*v - params.min[j]) / range } else { 0.0 };
                }
            }
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FoldSpec {
    pub test_subject: u32,
    pub val_subjects: Vec<u32>,
    pub train_subjects: Vec<u32>,
    pub seed: u64,
}

/// One fold per subject. Validation subjects are drawn uniformly from the
/// remaining subjects with a generator keyed on `(seed, test_subject)`.
pub fn loso_splits(subjects: &[u32], n_val: usize, seed: u64) -> Result<Vec<FoldSpec>> {
    let mut all = subjects.to_vec();
    all.sort_unstable();
    all.dedup();
    if all.len() != subjects.len() {
        return Err(Error::InvalidArgument("duplicate subject ids".into()));
    }
    if all.len() < n_val + 2 {
        return Err(Error::InvalidArgument(format!(
            "LOSO with {n_val} validation subjects needs at least {} subjects, got {}",
            n_val + 2,
            all.len()
        )));
    }
    Ok(all
        .iter()
        .map(|&test| {
            let rest: Vec<u32> = all.iter().copied().filter(|&s| s != test).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(u64::from(test));
            let picked = rand::seq::index::sample(&mut rng, rest.len(), n_val);
            let mut val: Vec<u32> = picked.iter().map(|i| rest[i]).collect();
            val.sort_unstable();
            let train = rest.into_iter().filter(|s| !val.contains(s)).collect();
            FoldSpec {
                test_subject: test,
                val_subjects: val,
                train_subjects: train,
                seed,
            }
        })
        .collect())
}

/// Normalised windows of one fold. The scaler is fitted on `train` only.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: FoldSpec,
    pub train: Vec<WindowedSample>,
    pub val: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
    pub scaler: ScalerParams,
}

pub fn prepare_fold(windows: &[WindowedSample], fold: &FoldSpec) -> Result<FoldData> {
    let pick = |subjects: &[u32]| -> Vec<WindowedSample> {
        windows.iter().filter(|w| subjects.contains(&w.s)).cloned().collect()
    };
    let train_raw = pick(&fold.train_subjects);
    let val_raw = pick(&fold.val_subjects);
    let test_raw = pick(&[fold.test_subject]);
    if train_raw.is_empty() {
        return Err(Error::Dataset(format!(
            "fold {}: no training windows",
            fold.test_subject
        )));
    }
    let scaler = fit_minmax(&train_raw)?;
    Ok(FoldData {
        fold: fold.clone(),
        train: apply_minmax(&train_raw, &scaler)?,
        val: apply_minmax(&val_raw, &scaler)?,
        test: apply_minmax(&test_raw, &scaler)?,
        scaler,
    })
}
