//! Versioned on-disk cache of segmented (unscaled) windows.
//!
//! One file per dataset; it stores the key it was built for, so a changed
//! configuration is detected and the file rebuilt.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, ExperimentConfig};
use crate::data::{generate_synthetic, load_dataset, DatasetName, DatasetSpec};
use crate::error::{Error, Result};
use crate::segmentation::{segment_all, WindowedSample};

pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedDataset {
    pub spec: DatasetSpec,
    pub windows: Vec<WindowedSample>,
}

impl PreparedDataset {
    pub fn classes(&self) -> usize {
        self.spec.num_classes()
    }

    /// Subjects that actually produced windows, ascending.
    pub fn subjects(&self) -> Vec<u32> {
        let mut s: Vec<u32> = self.windows.iter().map(|w| w.s).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    version: u32,
    key: String,
    data: PreparedDataset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheStatus {
    Hit,
    Miss,
    /// File existed but was built for another configuration.
    Stale,
    /// File existed but could not be decoded.
    Corrupt,
}

/// Key covering everything that shapes the windows.
pub fn cache_key(cfg: &ExperimentConfig) -> Result<String> {
    let spec = cfg.dataset_spec()?;
    let ident = serde_json::json!({
        "version": CACHE_VERSION,
        "spec": spec,
        "scenario": cfg.dataset.scenario,
        "synthetic": cfg.synthetic,
    });
    Ok(hex(&Sha256::digest(ident.to_string().as_bytes())))
}

pub fn cache_path(dir: &Path, name: DatasetName) -> PathBuf {
    dir.join(format!("{}.windows.bin", name.as_str()))
}

/// Parse (or generate) and segment the configured dataset.
pub fn build_dataset(cfg: &ExperimentConfig) -> Result<PreparedDataset> {
    let spec = cfg.dataset_spec()?;
    let recordings = match cfg.dataset.name {
        DatasetName::Synthetic => {
            let params = cfg
                .synthetic
                .as_ref()
                .ok_or_else(|| Error::Config("missing [synthetic] section".into()))?;
            generate_synthetic(params)?
                .into_iter()
                .filter(|r| spec.subjects.contains(&r.subject_id))
                .collect()
        }
        _ => {
            let root = cfg.dataset.root.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "no dataset root: set dataset.root or {}",
                    crate::config::DATA_ROOT_ENV
                ))
            })?;
            load_dataset(root, &spec, cfg.dataset.scenario)?
        }
    };
    let windows = segment_all(&recordings, &spec);
    if windows.is_empty() {
        return Err(Error::Dataset("segmentation produced no windows".into()));
    }
    Ok(PreparedDataset { spec, windows })
}

fn read(path: &Path, key: &str) -> std::result::Result<Option<PreparedDataset>, CacheStatus> {
    let Ok(bytes) = fs::read(path) else {
        return Err(CacheStatus::Miss);
    };
    match bincode::deserialize::<CacheFile>(&bytes) {
        Ok(f) if f.version == CACHE_VERSION && f.key == key => Ok(Some(f.data)),
        Ok(_) => Err(CacheStatus::Stale),
        Err(_) => Err(CacheStatus::Corrupt),
    }
}

/// Return cached windows when the key matches, otherwise build and store.
pub fn load_or_build(dir: &Path, cfg: &ExperimentConfig) -> Result<(PreparedDataset, CacheStatus)> {
    let key = cache_key(cfg)?;
    let path = cache_path(dir, cfg.dataset.name);
    let status = match read(&path, &key) {
        Ok(Some(data)) => {
            log::info!("cache hit: {}", path.display());
            return Ok((data, CacheStatus::Hit));
        }
        Ok(None) => CacheStatus::Miss,
        Err(s) => s,
    };
    match status {
        CacheStatus::Stale => log::warn!("cache {} is stale; rebuilding", path.display()),
        CacheStatus::Corrupt => log::warn!("cache {} is corrupt; rebuilding", path.display()),
        _ => log::info!("cache miss: {}", path.display()),
    }
    let data = build_dataset(cfg)?;
    fs::create_dir_all(dir)?;
    let file = CacheFile { version: CACHE_VERSION, key, data };
    let bytes = bincode::serialize(&file).map_err(|e| Error::Dataset(format!("cache encode: {e}")))?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, &path)?;
    Ok((file.data, status))
}
