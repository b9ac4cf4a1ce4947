//! REALDISP logs (`subjectN_<scenario>.log`, 120 tab-separated columns).
//!
//! Two time columns, nine 13-column sensor blocks (acc 3, gyro 3, mag 3,
//! quaternion 4) and a trailing label. Acc + gyro from every block gives 54
//! channels regardless of scenario.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_table, ChannelSelector, DatasetSpec, RawRecording};
use crate::error::{Error, Result};

const N_SENSORS: usize = 9;
const BLOCK: usize = 13;
const N_COLS: usize = 2 + N_SENSORS * BLOCK + 1;
const LABEL_COL: usize = N_COLS - 1;
const SAMPLE_RATE_HZ: f64 = 50.0;
const SENSOR_SITES: [&str; N_SENSORS] = ["rlc", "rua", "back", "lua", "llc", "rc", "rt", "lt", "lc"];

/// Sensor placement scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    #[default]
    Ideal,
    #[serde(rename = "self")]
    SelfPlaced,
    Mutual,
}

impl Scenario {
    fn file_tag(&self) -> &'static str {
        match self {
            Scenario::Ideal => "ideal",
            Scenario::SelfPlaced => "self",
            Scenario::Mutual => "mutual",
        }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Scenario::Ideal),
            "self" => Ok(Scenario::SelfPlaced),
            "mutual" => Ok(Scenario::Mutual),
            other => Err(Error::Config(format!("unknown REALDISP scenario `{other}`"))),
        }
    }
}

fn default_columns() -> (Vec<usize>, Vec<String>) {
    let mut cols = Vec::with_capacity(54);
    let mut names = Vec::with_capacity(54);
    for (s, site) in SENSOR_SITES.iter().enumerate() {
        let start = 2 + s * BLOCK;
        for (offset, kind) in [(0, "acc"), (3, "gyro")] {
            for (k, axis) in ["x", "y", "z"].iter().enumerate() {
                cols.push(start + offset + k);
                names.push(format!("{site}_{kind}_{axis}"));
            }
        }
    }
    (cols, names)
}

/// `mutual` logs are numbered (`subject2_mutual4.log`); the first one in
/// lexical order is used.
fn subject_file(root: &Path, subject: u32, scenario: Scenario) -> Result<PathBuf> {
    let exact = root.join(format!("subject{subject}_{}.log", scenario.file_tag()));
    if exact.is_file() || scenario != Scenario::Mutual {
        return Ok(exact);
    }
    let prefix = format!("subject{subject}_mutual");
    let mut found: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(&prefix) && n.ends_with(".log"))
        })
        .collect();
    found.sort();
    Ok(found.into_iter().next().unwrap_or(exact))
}

pub fn parse_realdisp(root: &Path, spec: &DatasetSpec, scenario: Scenario) -> Result<Vec<RawRecording>> {
    let (columns, names) = match &spec.channel_selector {
        ChannelSelector::Default => default_columns(),
        ChannelSelector::Columns(cols) => (cols.clone(), cols.iter().map(|c| format!("col{c}")).collect()),
    };
    if columns.iter().any(|&c| c >= LABEL_COL) {
        return Err(Error::Config("REALDISP channel column out of range".into()));
    }
    spec.subjects
        .par_iter()
        .map(|&subject| {
            let path = subject_file(root, subject, scenario)?;
            let table = read_table(&path, N_COLS)?;
            table.into_recording(&path, subject, &columns, names.clone(), LABEL_COL, SAMPLE_RATE_HZ, spec)
        })
        .collect()
}
