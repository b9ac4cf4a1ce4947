//! Raw sensor recordings and the dataset descriptions that drive parsing and
//! segmentation.
//!
//! Three public HAR corpora are supported (PAMAP2, MHEALTH, REALDISP) plus a
//! seeded synthetic generator used for desk-scale experiments and tests.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

mod mhealth;
mod pamap2;
mod realdisp;
mod synthetic;

pub use mhealth::parse_mhealth;
pub use pamap2::parse_pamap2;
pub use realdisp::{parse_realdisp, Scenario};
pub use synthetic::{generate_synthetic, SyntheticParams};

/// A continuous multichannel stream from one subject with per-timestep labels.
///
/// `labels` holds raw dataset labels; anything outside the dataset's activity
/// list has already been rewritten to the null label `0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecording {
    pub subject_id: u32,
    /// `T x c`
    pub channels: Array2<f64>,
    pub labels: Vec<i64>,
    pub sample_rate_hz: f64,
    pub channel_names: Vec<String>,
}

impl RawRecording {
    pub fn new(
        subject_id: u32,
        channels: Array2<f64>,
        labels: Vec<i64>,
        sample_rate_hz: f64,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        let rec = Self {
            subject_id,
            channels,
            labels,
            sample_rate_hz,
            channel_names,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subject_id < 1 {
            return Err(Error::Dataset("subject ids start at 1".into()));
        }
        if self.channels.nrows() != self.labels.len() {
            return Err(Error::Dataset(format!(
                "subject {}: {} rows but {} labels",
                self.subject_id,
                self.channels.nrows(),
                self.labels.len()
            )));
        }
        if self.channel_names.len() != self.channels.ncols() {
            return Err(Error::Dataset(format!(
                "subject {}: {} channel names for {} channels",
                self.subject_id,
                self.channel_names.len(),
                self.channels.ncols()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Pamap2,
    Mhealth,
    Realdisp,
    Synthetic,
}

impl DatasetName {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetName::Pamap2 => "pamap2",
            DatasetName::Mhealth => "mhealth",
            DatasetName::Realdisp => "realdisp",
            DatasetName::Synthetic => "synthetic",
        }
    }

    /// A' size per pair class used for the full-scale experiments.
    pub fn default_pairs_per_class(&self) -> usize {
        match self {
            DatasetName::Pamap2 | DatasetName::Realdisp => 25_000,
            DatasetName::Mhealth => 5_000,
            DatasetName::Synthetic => 200,
        }
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pamap2" => Ok(DatasetName::Pamap2),
            "mhealth" => Ok(DatasetName::Mhealth),
            "realdisp" => Ok(DatasetName::Realdisp),
            "synthetic" => Ok(DatasetName::Synthetic),
            other => Err(Error::Config(format!("unknown dataset `{other}`"))),
        }
    }
}

/// Which raw file columns become channels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSelector {
    /// The dataset's accelerometer + gyroscope columns.
    #[default]
    Default,
    /// Explicit zero-based column indices into the raw file rows.
    Columns(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub subjects: Vec<u32>,
    /// Raw labels, ascending. Position in this list is the class index.
    pub activity_labels: Vec<i64>,
    pub window_size: usize,
    pub overlap_fraction: f64,
    #[serde(default)]
    pub channel_selector: ChannelSelector,
}

impl DatasetSpec {
    pub fn new(
        name: DatasetName,
        subjects: Vec<u32>,
        mut activity_labels: Vec<i64>,
        window_size: usize,
        overlap_fraction: f64,
    ) -> Result<Self> {
        activity_labels.sort_unstable();
        let spec = Self {
            name,
            subjects,
            activity_labels,
            window_size,
            overlap_fraction,
            channel_selector: ChannelSelector::Default,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// PAMAP2 protocol activities, subjects 1-8 (subject 9 is excluded).
    pub fn pamap2() -> Self {
        Self::new(
            DatasetName::Pamap2,
            (1..=8).collect(),
            vec![1, 2, 3, 4, 5, 6, 7, 12, 13, 16, 17, 24],
            512,
            0.5,
        )
        .expect("static spec")
    }

    pub fn mhealth() -> Self {
        Self::new(
            DatasetName::Mhealth,
            (1..=10).collect(),
            (1..=12).collect(),
            512,
            0.5,
        )
        .expect("static spec")
    }

    pub fn realdisp() -> Self {
        Self::new(
            DatasetName::Realdisp,
            (1..=17).collect(),
            (1..=33).collect(),
            256,
            0.5,
        )
        .expect("static spec")
    }

    /// Window length used for synthetic corpora unless overridden.
    pub fn synthetic_default_window() -> usize {
        64
    }

    /// Spec matching [`generate_synthetic`] output (raw labels `1..=n_activities`).
    pub fn synthetic(n_subjects: u32, n_activities: usize, window_size: usize) -> Self {
        Self::new(
            DatasetName::Synthetic,
            (1..=n_subjects).collect(),
            (1..=n_activities as i64).collect(),
            window_size,
            0.5,
        )
        .expect("synthetic spec")
    }

    pub fn default_for(name: DatasetName) -> Self {
        match name {
            DatasetName::Pamap2 => Self::pamap2(),
            DatasetName::Mhealth => Self::mhealth(),
            DatasetName::Realdisp => Self::realdisp(),
            DatasetName::Synthetic => Self::synthetic(6, 4, 64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.activity_labels.len() < 2 {
            return Err(Error::Config("need at least 2 activity labels".into()));
        }
        let mut sorted = self.activity_labels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.activity_labels.len() {
            return Err(Error::Config("duplicate activity labels".into()));
        }
        if sorted != self.activity_labels {
            return Err(Error::Config("activity_labels must be ascending".into()));
        }
        if sorted.contains(&0) {
            return Err(Error::Config("label 0 is reserved for null".into()));
        }
        if self.window_size == 0 {
            return Err(Error::Config("window_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::Config(format!(
                "overlap_fraction {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        if self.stride() == 0 {
            return Err(Error::Config("window stride rounds down to 0".into()));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.activity_labels.len()
    }

    /// Contiguous class index of a raw label, `None` for null/unknown labels.
    pub fn class_index(&self, raw: i64) -> Option<usize> {
        if raw == 0 {
            return None;
        }
        self.activity_labels.binary_search(&raw).ok()
    }

    pub fn stride(&self) -> usize {
        (self.window_size as f64 * (1.0 - self.overlap_fraction)).floor() as usize
    }
}

/// Parse whichever dataset `spec` names. Synthetic data has no on-disk form.
pub fn load_dataset(root: &Path, spec: &DatasetSpec, scenario: Scenario) -> Result<Vec<RawRecording>> {
    match spec.name {
        DatasetName::Pamap2 => parse_pamap2(root, spec),
        DatasetName::Mhealth => parse_mhealth(root, spec),
        DatasetName::Realdisp => parse_realdisp(root, spec, scenario),
        DatasetName::Synthetic => Err(Error::Config(
            "synthetic data is generated, not parsed".into(),
        )),
    }
}

/// Parsed numeric table from a delimited text file.
pub(crate) struct Table {
    pub rows: Vec<Vec<f64>>,
}

/// Read a whitespace-delimited numeric table, requiring exactly `n_cols`
/// columns on every non-blank line. Unparseable tokens become NaN.
pub(crate) fn read_table(path: &Path, n_cols: usize) -> Result<Table> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| tok.parse::<f64>().unwrap_or(f64::NAN))
            .collect();
        if row.len() != n_cols {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: format!("expected {n_cols} columns, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Dataset(format!("{} contains no rows", path.display())));
    }
    Ok(Table { rows })
}

impl Table {
    /// Assemble a recording from selected columns, rewriting labels not in
    /// the spec to null and repairing NaN dropouts per channel.
    pub(crate) fn into_recording(
        self,
        path: &Path,
        subject_id: u32,
        columns: &[usize],
        names: Vec<String>,
        label_col: usize,
        sample_rate_hz: f64,
        spec: &DatasetSpec,
    ) -> Result<RawRecording> {
        let t = self.rows.len();
        let c = columns.len();
        let mut channels = Array2::<f64>::zeros((t, c));
        let mut labels = Vec::with_capacity(t);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, &col) in columns.iter().enumerate() {
                let v = *row.get(col).ok_or_else(|| {
                    Error::Config(format!("channel column {col} out of range"))
                })?;
                channels[[i, j]] = v;
            }
            let raw = row[label_col];
            let raw = if raw.is_finite() { raw as i64 } else { 0 };
            labels.push(if spec.class_index(raw).is_some() { raw } else { 0 });
        }
        for j in 0..c {
            let mut series: Vec<f64> = channels.column(j).to_vec();
            interpolate_gaps(&mut series);
            channels
                .column_mut(j)
                .iter_mut()
                .zip(series)
                .for_each(|(dst, v)| *dst = v);
            if channels.column(j).iter().any(|v| !v.is_finite()) {
                return Err(Error::Dataset(format!(
                    "{}: channel `{}` has no finite samples",
                    path.display(),
                    names[j]
                )));
            }
        }
        RawRecording::new(subject_id, channels, labels, sample_rate_hz, names)
    }
}

/// Linear interpolation across NaN runs; leading/trailing runs take the
/// nearest finite value. An all-NaN series is left untouched.
pub fn interpolate_gaps(values: &mut [f64]) {
    let finite: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
        return;
    };
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for pair in finite.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b - a > 1 {
            let (va, vb) = (values[a], values[b]);
            for i in a + 1..b {
                let frac = (i - a) as f64 / (b - a) as f64;
                values[i] = va + frac * (vb - va);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_fills_interior_and_edges() {
        let mut v = [f64::NAN, 1.0, f64::NAN, f64::NAN, 4.0, f64::NAN];
        interpolate_gaps(&mut v);
        assert_eq!(v, [1.0, 1.0, 2.0, 3.0, 4.0, 4.0]);
    }

    #[test]
    fn class_index_is_ascending_and_skips_null() {
        let spec = DatasetSpec::pamap2();
        assert_eq!(spec.num_classes(), 12);
        assert_eq!(spec.class_index(1), Some(0));
        assert_eq!(spec.class_index(24), Some(11));
        assert_eq!(spec.class_index(9), None);
        assert_eq!(spec.class_index(0), None);
    }

    #[test]
    fn spec_rejects_bad_values() {
        assert!(DatasetSpec::new(DatasetName::Synthetic, vec![1], vec![1, 1], 8, 0.5).is_err());
        assert!(DatasetSpec::new(DatasetName::Synthetic, vec![1], vec![1], 8, 0.5).is_err());
        assert!(DatasetSpec::new(DatasetName::Synthetic, vec![1], vec![1, 2], 0, 0.5).is_err());
        assert!(DatasetSpec::new(DatasetName::Synthetic, vec![1], vec![1, 2], 8, 1.0).is_err());
        let spec = DatasetSpec::new(DatasetName::Synthetic, vec![1], vec![3, 1, 2], 8, 0.5).unwrap();
        assert_eq!(spec.activity_labels, vec![1, 2, 3]);
    }

    #[test]
    fn recording_invariants() {
        let ok = RawRecording::new(1, Array2::zeros((3, 2)), vec![0; 3], 50.0, vec!["a".into(), "b".into()]);
        assert!(ok.is_ok());
        assert!(RawRecording::new(0, Array2::zeros((3, 2)), vec![0; 3], 50.0, vec!["a".into(), "b".into()]).is_err());
        assert!(RawRecording::new(1, Array2::zeros((3, 2)), vec![0; 2], 50.0, vec!["a".into(), "b".into()]).is_err());
        assert!(RawRecording::new(1, Array2::zeros((3, 2)), vec![0; 3], 50.0, vec!["a".into()]).is_err());
    }
}
