//! Experiment configuration: one TOML file, unknown keys rejected.
//!
//! ```toml
//! out_dir = "runs/pamap2"
//! modes = ["full"]
//!
//! [dataset]
//! name = "pamap2"
//! root = "/data/PAMAP2_Dataset"
//!
//! [train]
//! epochs_step3 = 150
//! ```
//!
//! `train.pairs_per_class` defaults to the dataset's own size when absent.
//! The dataset root can be overridden with the `INVAR_HAR_DATA_ROOT`
//! environment variable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetName, DatasetSpec, Scenario, SyntheticParams};
use crate::error::{Error, Result};
use crate::evaluation::LosoConfig;
use crate::shift::ShiftOptions;
use crate::trainer::{AblationMode, TrainConfig};

pub const DATA_ROOT_ENV: &str = "INVAR_HAR_DATA_ROOT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: DatasetName,
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Scenario,
    /// Overrides the dataset's window length.
    #[serde(default)]
    pub window_size: Option<usize>,
    #[serde(default)]
    pub overlap: Option<f64>,
    /// Restrict to these subjects.
    #[serde(default)]
    pub subjects: Option<Vec<u32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightName {
    WA,
    WR,
    WC,
}

impl std::str::FromStr for WeightName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "w_a" | "wa" => Ok(WeightName::WA),
            "w_r" | "wr" => Ok(WeightName::WR),
            "w_c" | "wc" => Ok(WeightName::WC),
            other => Err(Error::Config(format!("unknown weight `{other}`"))),
        }
    }
}

impl WeightName {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightName::WA => "w_a",
            WeightName::WR => "w_r",
            WeightName::WC => "w_c",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub which: WeightName,
    pub values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { which: WeightName::WA, values: vec![0.0, 0.05, 0.1, 0.2, 0.4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LosoSection {
    pub n_val: usize,
    pub split_seed: u64,
}

impl Default for LosoSection {
    fn default() -> Self {
        Self { n_val: 2, split_seed: 0 }
    }
}

fn default_modes() -> Vec<AblationMode> {
    vec![AblationMode::Full]
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

fn default_workers() -> usize {
    1
}

fn default_device() -> String {
    "cpu".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    /// Generator settings when `dataset.name = "synthetic"`.
    #[serde(default)]
    pub synthetic: Option<SyntheticParams>,
    #[serde(default)]
    pub loso: LosoSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub shift: ShiftOptions,
    #[serde(default = "default_modes")]
    pub modes: Vec<AblationMode>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Rewrite record files in canonical order after each run.
    #[serde(default)]
    pub deterministic: bool,
    /// Only `cpu` is available.
    #[serde(default = "default_device")]
    pub device: String,
}

impl ExperimentConfig {
    /// Defaults for a dataset, with its own pair-set size.
    pub fn for_dataset(name: DatasetName) -> Self {
        let mut cfg = Self {
            dataset: DatasetConfig {
                name,
                root: None,
                scenario: Scenario::default(),
                window_size: None,
                overlap: None,
                subjects: None,
            },
            synthetic: (name == DatasetName::Synthetic).then(SyntheticParams::default),
            loso: LosoSection::default(),
            train: TrainConfig::default(),
            shift: ShiftOptions { per_activity: true, ..Default::default() },
            modes: default_modes(),
            sweep: SweepConfig::default(),
            out_dir: default_out(),
            workers: 1,
            deterministic: false,
            device: default_device(),
        };
        cfg.train.pairs_per_class = name.default_pairs_per_class();
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let explicit_pairs = table
            .get("train")
            .and_then(|t| t.get("pairs_per_class"))
            .is_some();
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !explicit_pairs {
            cfg.train.pairs_per_class = cfg.dataset.name.default_pairs_per_class();
        }
        if cfg.dataset.name == DatasetName::Synthetic && cfg.synthetic.is_none() {
            cfg.synthetic = Some(SyntheticParams::default());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// Apply the dataset-root environment override.
    pub fn apply_env(&mut self) {
        if let Some(root) = std::env::var_os(DATA_ROOT_ENV).filter(|v| !v.is_empty()) {
            self.dataset.root = Some(PathBuf::from(root));
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.dataset_spec()?;
        if self.modes.is_empty() {
            return Err(Error::Config("modes must not be empty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.device != "cpu" {
            return Err(Error::Config(format!("device `{}` is not available; use `cpu`", self.device)));
        }
        if self.sweep.values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite and non-negative".into()));
        }
        if self.dataset.name != DatasetName::Synthetic && self.synthetic.is_some() {
            return Err(Error::Config("[synthetic] only applies to the synthetic dataset".into()));
        }
        Ok(())
    }

    /// Dataset spec after applying overrides.
    pub fn dataset_spec(&self) -> Result<DatasetSpec> {
        let mut spec = match (self.dataset.name, &self.synthetic) {
            (DatasetName::Synthetic, Some(p)) => {
                DatasetSpec::synthetic(p.n_subjects as u32, p.n_activities, DatasetSpec::synthetic_default_window())
            }
            (DatasetName::Synthetic, None) => {
                return Err(Error::Config("synthetic dataset needs a [synthetic] section".into()))
            }
            (name, _) => DatasetSpec::default_for(name),
        };
        if let Some(w) = self.dataset.window_size {
            spec.window_size = w;
        }
        if let Some(o) = self.dataset.overlap {
            spec.overlap_fraction = o;
        }
        if let Some(subjects) = &self.dataset.subjects {
            if let Some(bad) = subjects.iter().find(|s| !spec.subjects.contains(s)) {
                return Err(Error::Config(format!("subject {bad} is not part of {}", spec.name)));
            }
            spec.subjects = subjects.clone();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn loso_config(&self) -> LosoConfig {
        LosoConfig {
            train: self.train.clone(),
            n_val: self.loso.n_val,
            split_seed: self.loso.split_seed,
            shift: self.shift,
            checkpoint_dir: Some(self.out_dir.join("checkpoints")),
        }
    }

    /// Hash of every setting that influences results (not `out_dir`,
    /// `workers`, `deterministic` or the dataset root).
    pub fn result_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.workers = 1;
        c.deterministic = false;
        c.dataset.root = None;
        c.modes.clear();
        c.sweep = SweepConfig::default();
        let json = serde_json::to_string(&c).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_uses_dataset_defaults() {
        let cfg = ExperimentConfig::from_toml_str("[dataset]\nname = \"mhealth\"\n").unwrap();
        assert_eq!(cfg.train.pairs_per_class, 5_000);
        assert_eq!(cfg.modes, vec![AblationMode::Full]);
        cfg.validate().unwrap();
        assert_eq!(cfg.dataset_spec().unwrap().window_size, 512);
        let cfg = ExperimentConfig::from_toml_str("[dataset]\nname = \"realdisp\"\n").unwrap();
        assert_eq!(cfg.train.pairs_per_class, 25_000);
        assert_eq!(cfg.dataset_spec().unwrap().window_size, 256);
    }

    #[test]
    fn explicit_pairs_win() {
        let cfg = ExperimentConfig::from_toml_str("[dataset]\nname = \"pamap2\"\n[train]\npairs_per_class = 10\n").unwrap();
        assert_eq!(cfg.train.pairs_per_class, 10);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml_str("[dataset]\nname = \"pamap2\"\nbogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("[dataset]\nname = \"pamap2\"\n[train]\nlr = 1\n").is_err());
        assert!(ExperimentConfig::from_toml_str("colour = 1\n[dataset]\nname = \"pamap2\"\n").is_err());
    }

    #[test]
    fn roundtrip_and_overrides() {
        let mut cfg = ExperimentConfig::for_dataset(DatasetName::Synthetic);
        cfg.dataset.window_size = Some(48);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.dataset_spec().unwrap().window_size, 48);
        assert_eq!(back.result_hash(), cfg.result_hash());
        let mut other = cfg.clone();
        other.out_dir = "elsewhere".into();
        other.deterministic = true;
        other.workers = 4;
        assert_eq!(other.result_hash(), cfg.result_hash());
        other.train.epochs_step3 = 3;
        assert_ne!(other.result_hash(), cfg.result_hash());
    }

    #[test]
    fn validation_errors() {
        let mut cfg = ExperimentConfig::for_dataset(DatasetName::Pamap2);
        cfg.device = "cuda".into();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::for_dataset(DatasetName::Pamap2);
        cfg.dataset.subjects = Some(vec![9]);
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::for_dataset(DatasetName::Pamap2);
        cfg.train.weights.w_a = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn weight_names() {
        assert_eq!("w_A".parse::<WeightName>().unwrap(), WeightName::WA);
        assert!("w_x".parse::<WeightName>().is_err());
    }
}
