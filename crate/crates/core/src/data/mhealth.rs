//! MHEALTH logs (`mHealth_subjectN.log`, 24 tab-separated columns).
//!
//! Columns: chest acc (0-2), ECG (3-4), left ankle acc/gyro/mag (5-13),
//! right lower arm acc/gyro/mag (14-22), label (23). The chest unit carries
//! no gyroscope, so the default selection has 15 channels.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{read_table, ChannelSelector, DatasetSpec, RawRecording};
use crate::error::{Error, Result};

const N_COLS: usize = 24;
const LABEL_COL: usize = 23;
const SAMPLE_RATE_HZ: f64 = 50.0;

fn default_columns() -> (Vec<usize>, Vec<String>) {
    let groups: [(&str, usize); 5] = [
        ("chest_acc", 0),
        ("ankle_acc", 5),
        ("ankle_gyro", 8),
        ("wrist_acc", 14),
        ("wrist_gyro", 17),
    ];
    let mut cols = Vec::with_capacity(15);
    let mut names = Vec::with_capacity(15);
    for (name, start) in groups {
        for (k, axis) in ["x", "y", "z"].iter().enumerate() {
            cols.push(start + k);
            names.push(format!("{name}_{axis}"));
        }
    }
    (cols, names)
}

fn subject_file(root: &Path, subject: u32) -> PathBuf {
    let name = format!("mHealth_subject{subject}.log");
    let nested = root.join("MHEALTHDATASET").join(&name);
    if nested.is_file() {
        nested
    } else {
        root.join(name)
    }
}

pub fn parse_mhealth(root: &Path, spec: &DatasetSpec) -> Result<Vec<RawRecording>> {
    let (columns, names) = match &spec.channel_selector {
        ChannelSelector::Default => default_columns(),
        ChannelSelector::Columns(cols) => (cols.clone(), cols.iter().map(|c| format!("col{c}")).collect()),
    };
    if columns.iter().any(|&c| c >= LABEL_COL) {
        return Err(Error::Config("MHEALTH channel column out of range".into()));
    }
    spec.subjects
        .par_iter()
        .map(|&subject| {
            let path = subject_file(root, subject);
            let table = read_table(&path, N_COLS)?;
            table.into_recording(&path, subject, &columns, names.clone(), LABEL_COL, SAMPLE_RATE_HZ, spec)
        })
        .collect()
}
