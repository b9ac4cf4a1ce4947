//! Ready-made experiment setups.

use std::path::Path;

use crate::config::{DatasetConfig, ExperimentConfig, LosoSection};
use crate::data::{generate_synthetic, DatasetName, DatasetSpec, SyntheticParams};
use crate::error::Result;
use crate::evaluation::LosoConfig;
use crate::model::ModelConfig;
use crate::segmentation::{segment_all, WindowedSample};
use crate::trainer::TrainConfig;

/// A synthetic corpus together with the LOSO setup to run on it.
#[derive(Debug, Clone)]
pub struct SyntheticExperiment {
    pub params: SyntheticParams,
    pub spec: DatasetSpec,
    pub loso: LosoConfig,
}

impl SyntheticExperiment {
    pub fn windows(&self) -> Result<Vec<WindowedSample>> {
        Ok(segment_all(&generate_synthetic(&self.params)?, &self.spec))
    }

    /// The same setup as a full experiment configuration writing to `out_dir`.
    pub fn experiment_config(&self, out_dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::for_dataset(DatasetName::Synthetic);
        cfg.dataset = DatasetConfig {
            window_size: Some(self.spec.window_size),
            overlap: Some(self.spec.overlap_fraction),
            ..cfg.dataset
        };
        cfg.synthetic = Some(self.params.clone());
        cfg.loso = LosoSection { n_val: self.loso.n_val, split_seed: self.loso.split_seed };
        cfg.train = self.loso.train.clone();
        cfg.shift = self.loso.shift;
        cfg.out_dir = out_dir.to_path_buf();
        cfg
    }
}

/// Desk-scale run: 6 subjects, 4 activities, full distortion, a quarter-width
/// encoder with 16 latent dimensions, 5/5/20 epochs, seeds 0 and 1. Takes a
/// few minutes on one core.
pub fn desk_synthetic() -> SyntheticExperiment {
    let params = SyntheticParams {
        n_subjects: 6,
        n_activities: 4,
        subject_distortion_strength: 1.0,
        ..Default::default()
    };
    let spec = DatasetSpec::synthetic(6, 4, DatasetSpec::synthetic_default_window());
    let loso = LosoConfig {
        train: TrainConfig {
            epochs_step1: 5,
            epochs_step2: 5,
            epochs_step3: 20,
            seeds: vec![0, 1],
            pairs_per_class: DatasetName::Synthetic.default_pairs_per_class(),
            model: ModelConfig { d_latent: 16, width_scale: 0.25, ..Default::default() },
            ..Default::default()
        },
        ..Default::default()
    };
    SyntheticExperiment { params, spec, loso }
}

/// A much smaller variant for smoke tests (seconds, not minutes).
pub fn smoke_synthetic() -> SyntheticExperiment {
    let mut exp = desk_synthetic();
    exp.params.n_subjects = 4;
    exp.params.n_activities = 3;
    exp.params.duration_s = 60.0;
    exp.spec = DatasetSpec::synthetic(4, 3, 32);
    exp.loso.n_val = 1;
    exp.loso.train.epochs_step1 = 1;
    exp.loso.train.epochs_step2 = 1;
    exp.loso.train.epochs_step3 = 2;
    exp.loso.train.seeds = vec![0];
    exp.loso.train.pairs_per_class = 40;
    exp.loso.train.model = ModelConfig { d_latent: 4, width_scale: 0.125, ..Default::default() };
    exp
}
