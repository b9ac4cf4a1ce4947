//! Line-delimited result records, one JSON object per fold × seed × mode.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::FoldResult;
use crate::model::DiscriminatorKind;
use crate::trainer::AblationMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    /// Which experiment produced the record, e.g. `loso` or `sweep:w_a=0.1`.
    pub experiment: String,
    pub dataset: String,
    pub config_hash: String,
    pub result: FoldResult,
}

impl RunRecord {
    pub fn new(experiment: &str, dataset: &str, config_hash: &str, result: FoldResult) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            dataset: dataset.into(),
            config_hash: config_hash.into(),
            result,
        }
    }
}

/// Append-only writer; safe to share between worker threads.
pub struct RecordWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordWriter {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { path: path.to_path_buf(), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one JSON line.
    pub fn append<T: Serialize>(&self, value: &T) -> Result<()> {
        let mut line = serde_json::to_string(value)?;
        line.push('\n');
        let mut f = self.file.lock().map_err(|_| Error::InvalidArgument("record writer poisoned".into()))?;
        f.write_all(line.as_bytes())?;
        f.flush()?;
        Ok(())
    }
}

/// Read every record. A truncated final line (from an interrupted run) is
/// dropped with a warning; any other malformed line is an error.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let lines: Vec<String> = BufReader::new(File::open(path)?).lines().collect::<std::io::Result<_>>()?;
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RunRecord>(line) {
            Ok(r) if r.schema_version == SCHEMA_VERSION => out.push(r),
            Ok(r) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    msg: format!("schema version {} (expected {SCHEMA_VERSION})", r.schema_version),
                })
            }
            Err(e) if i + 1 == lines.len() => log::warn!("{}: dropping truncated last line ({e})", path.display()),
            Err(e) => {
                return Err(Error::Parse { path: path.to_path_buf(), line: i + 1, msg: e.to_string() })
            }
        }
    }
    Ok(out)
}

/// Rewrite a record file in a canonical order (fold, seed, mode,
/// discriminator, experiment) so reruns compare byte for byte.
pub fn canonicalize(path: &Path) -> Result<()> {
    let mut recs = read_records(path)?;
    recs.sort_by(|a, b| (a.experiment.as_str(), a.result.key()).cmp(&(b.experiment.as_str(), b.result.key())));
    let mut text = String::new();
    for r in &recs {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// `(test subject, seed)` pairs that already have results for every mode.
pub fn completed_jobs(
    records: &[RunRecord],
    experiment: &str,
    config_hash: &str,
    discriminator: DiscriminatorKind,
    modes: &[AblationMode],
) -> BTreeSet<(u32, u64)> {
    let have: BTreeSet<(u32, u64, AblationMode)> = records
        .iter()
        .filter(|r| r.experiment == experiment && r.config_hash == config_hash && r.result.discriminator == discriminator)
        .map(|r| (r.result.fold.test_subject, r.result.seed, r.result.mode))
        .collect();
    have.iter()
        .map(|&(s, seed, _)| (s, seed))
        .filter(|&(s, seed)| modes.iter().all(|&m| have.contains(&(s, seed, m))))
        .collect()
}
