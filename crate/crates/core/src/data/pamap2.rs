//! PAMAP2 protocol recordings (`subject10N.dat`, 54 space-separated columns).
//!
//! Column layout: timestamp, activityID, heart rate, then three 17-column IMU
//! blocks (hand, chest, ankle). Inside a block: temperature, acc ±16g (3),
//! acc ±6g (3), gyroscope (3), magnetometer (3), orientation (4).

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{read_table, ChannelSelector, DatasetSpec, RawRecording};
use crate::error::{Error, Result};

const N_COLS: usize = 54;
const LABEL_COL: usize = 1;
const SAMPLE_RATE_HZ: f64 = 100.0;
const IMU_BLOCKS: [(&str, usize); 3] = [("hand", 3), ("chest", 20), ("ankle", 37)];

fn default_columns() -> (Vec<usize>, Vec<String>) {
    let mut cols = Vec::with_capacity(18);
    let mut names = Vec::with_capacity(18);
    for (site, start) in IMU_BLOCKS {
        for (offset, kind) in [(1, "acc16"), (7, "gyro")] {
            for (k, axis) in ["x", "y", "z"].iter().enumerate() {
                cols.push(start + offset + k);
                names.push(format!("{site}_{kind}_{axis}"));
            }
        }
    }
    (cols, names)
}

fn subject_file(root: &Path, subject: u32) -> PathBuf {
    let name = format!("subject{}.dat", 100 + subject);
    let direct = root.join(&name);
    if direct.is_file() {
        return direct;
    }
    let nested = root.join("Protocol").join(&name);
    if nested.is_file() {
        nested
    } else {
        direct
    }
}

/// Parse the subjects listed in `spec` (subject 9 is absent from the default
/// spec and therefore never loaded).
pub fn parse_pamap2(root: &Path, spec: &DatasetSpec) -> Result<Vec<RawRecording>> {
    let (columns, names) = match &spec.channel_selector {
        ChannelSelector::Default => default_columns(),
        ChannelSelector::Columns(cols) => (cols.clone(), cols.iter().map(|c| format!("col{c}")).collect()),
    };
    if columns.iter().any(|&c| c >= N_COLS || c == LABEL_COL) {
        return Err(Error::Config("PAMAP2 channel column out of range".into()));
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
