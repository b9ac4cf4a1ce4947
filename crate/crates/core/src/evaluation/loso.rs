use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, Metrics};
use crate::error::{Error, Result};
use crate::model::DiscriminatorKind;
use crate::segmentation::{loso_splits, prepare_fold, FoldSpec, WindowedSample};
use crate::shift::{latent_shift, LatentShift, ShiftOptions};
use crate::trainer::{train_fold_modes, AblationMode, Selection, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LosoConfig {
    pub train: TrainConfig,
    /// Validation subjects per fold.
    pub n_val: usize,
    /// Seed of the validation-subject draw; shared by every training seed.
    pub split_seed: u64,
    pub shift: ShiftOptions,
    /// Where per-fold checkpoints go, if anywhere.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for LosoConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            n_val: 2,
            split_seed: 0,
            shift: ShiftOptions { per_activity: true, ..Default::default() },
            checkpoint_dir: None,
        }
    }
}

/// Latent shift of one fold under the step-2 and final encoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldShift {
    pub step2: LatentShift,
    pub step3: LatentShift,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: FoldSpec,
    pub seed: u64,
    pub mode: AblationMode,
    pub discriminator: DiscriminatorKind,
    pub metrics: Metrics,
    pub n_test_windows: usize,
    pub selection: Option<Selection>,
    pub encoder_hash: String,
    pub shift: Option<FoldShift>,
    pub history: TrainHistory,
}

impl FoldResult {
    pub fn key(&self) -> (u32, u64, AblationMode, DiscriminatorKind) {
        (self.fold.test_subject, self.seed, self.mode, self.discriminator)
    }
}

/// One training job: a fold under one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub fold: FoldSpec,
    pub seed: u64,
}

pub fn loso_jobs(subjects: &[u32], cfg: &LosoConfig) -> Result<Vec<Job>> {
    let folds = loso_splits(subjects, cfg.n_val, cfg.split_seed)?;
    Ok(folds
        .into_iter()
        .flat_map(|fold| cfg.train.seeds.iter().map(move |&seed| Job { fold: fold.clone(), seed }))
        .collect())
}

/// Train and score one job under every requested mode.
pub fn run_job(
    windows: &[WindowedSample],
    classes: usize,
    job: &Job,
    cfg: &LosoConfig,
    modes: &[AblationMode],
) -> Result<Vec<FoldResult>> {
    let data = prepare_fold(windows, &job.fold)?;
    if data.test.is_empty() {
        return Err(Error::Dataset(format!("fold {}: no test windows", job.fold.test_subject)));
    }
    if data.test.iter().any(|w| w.s != job.fold.test_subject)
        || data.train.iter().chain(&data.val).any(|w| w.s == job.fold.test_subject)
    {
        return Err(Error::Dataset(format!("fold {}: test subject leaked", job.fold.test_subject)));
    }
    let trained = train_fold_modes(&data, classes, &cfg.train, modes, job.seed)?;
    let mut out = Vec::with_capacity(trained.len());
    for t in trained {
        let metrics = evaluate(&t.bundle, &data.test)?;
        let shift = match (&t.encoder_step2, t.mode) {
            (Some(enc2), AblationMode::Full) => Some(FoldShift {
                step2: latent_shift(enc2, &data.train, &data.test, classes, cfg.shift)?,
                step3: latent_shift(&t.encoder_final, &data.train, &data.test, classes, cfg.shift)?,
            }),
            _ => None,
        };
        if let Some(dir) = &cfg.checkpoint_dir {
            std::fs::create_dir_all(dir)?;
            let name = format!(
                "{}_{}_fold{}_seed{}.safetensors",
                cfg.train.discriminator.label(),
                t.mode,
                job.fold.test_subject,
                job.seed
            );
            t.bundle.save_checkpoint(&dir.join(name))?;
        }
        log::info!(
            "fold {} seed {} {} ({}): acc {:.4} f1 {:.4}",
            job.fold.test_subject,
            job.seed,
            t.mode,
            cfg.train.discriminator.label(),
            metrics.accuracy,
            metrics.macro_f1
        );
        out.push(FoldResult {
            fold: job.fold.clone(),
            seed: job.seed,
            mode: t.mode,
            discriminator: cfg.train.discriminator,
            n_test_windows: data.test.len(),
            metrics,
            selection: t.selection,
            encoder_hash: t.bundle.encoder_arch_hash(),
            shift,
            history: t.history,
        });
    }
    Ok(out)
}

/// Run jobs on the current rayon pool. `on_done` sees each job's results as
/// soon as they exist; the return value is in job order.
pub fn run_jobs(
    windows: &[WindowedSample],
    classes: usize,
    jobs: &[Job],
    cfg: &LosoConfig,
    modes: &[AblationMode],
    on_done: &(dyn Fn(&[FoldResult]) -> Result<()> + Sync),
) -> Result<Vec<FoldResult>> {
    let per_job: Vec<Result<Vec<FoldResult>>> = jobs
        .par_iter()
        .map(|job| {
            let res = run_job(windows, classes, job, cfg, modes)?;
            on_done(&res)?;
            Ok(res)
        })
        .collect();
    let mut out = Vec::new();
    for r in per_job {
        out.extend(r?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (`n - 1`; zero for one value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

impl std::fmt::Display for MeanStd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub test_subject: u32,
    pub n_seeds: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Mean ± std across folds of the seed-averaged fold metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mode: AblationMode,
    pub discriminator: DiscriminatorKind,
    pub n_runs: usize,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub std_convention: String,
    pub folds: Vec<FoldScore>,
}

pub fn aggregate(results: &[FoldResult], mode: AblationMode, discriminator: DiscriminatorKind) -> Result<AggregateReport> {
    let mut by_fold: BTreeMap<u32, Vec<&Metrics>> = BTreeMap::new();
    let mut n_runs = 0;
    for r in results.iter().filter(|r| r.mode == mode && r.discriminator == discriminator) {
        by_fold.entry(r.fold.test_subject).or_default().push(&r.metrics);
        n_runs += 1;
    }
    if by_fold.is_empty() {
        return Err(Error::InvalidArgument(format!("no results for {mode} / {}", discriminator.label())));
    }
    let folds: Vec<FoldScore> = by_fold
        .into_iter()
        .map(|(s, ms)| {
            let n = ms.len() as f64;
            FoldScore {
                test_subject: s,
                n_seeds: ms.len(),
                accuracy: ms.iter().map(|m| m.accuracy).sum::<f64>() / n,
                macro_f1: ms.iter().map(|m| m.macro_f1).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(AggregateReport {
        mode,
        discriminator,
        n_runs,
        accuracy: MeanStd::of(&folds.iter().map(|f| f.accuracy).collect::<Vec<_>>()),
        macro_f1: MeanStd::of(&folds.iter().map(|f| f.macro_f1).collect::<Vec<_>>()),
        std_convention: "sample (n-1) across folds of seed-averaged scores".into(),
        folds,
    })
}

#[derive(Debug, Clone)]
pub struct LosoOutcome {
    pub results: Vec<FoldResult>,
    pub aggregates: Vec<AggregateReport>,
}

/// Full LOSO over every subject in `windows`, every seed and every mode.
pub fn run_loso(
    windows: &[WindowedSample],
    subjects: &[u32],
    classes: usize,
    cfg: &LosoConfig,
    modes: &[AblationMode],
) -> Result<LosoOutcome> {
    let jobs = loso_jobs(subjects, cfg)?;
    let results = run_jobs(windows, classes, &jobs, cfg, modes, &|_| Ok(()))?;
    let aggregates = modes
        .iter()
        .map(|&m| aggregate(&results, m, cfg.train.discriminator))
        .collect::<Result<Vec<_>>>()?;
    Ok(LosoOutcome { results, aggregates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorRow {
    pub discriminator: DiscriminatorKind,
    pub label: String,
    pub encoder_hash: String,
    pub aggregate: AggregateReport,
}

/// Full-mode LOSO for each discriminator with everything else held fixed.
pub fn compare_discriminators(
    windows: &[WindowedSample],
    subjects: &[u32],
    classes: usize,
    cfg: &LosoConfig,
) -> Result<(Vec<DiscriminatorRow>, Vec<FoldResult>)> {
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for kind in DiscriminatorKind::ALL {
        let mut c = cfg.clone();
        c.train.discriminator = kind;
        let out = run_loso(windows, subjects, classes, &c, &[AblationMode::Full])?;
        rows.push(DiscriminatorRow {
            discriminator: kind,
            label: kind.label().into(),
            encoder_hash: out.results[0].encoder_hash.clone(),
            aggregate: out.aggregates[0].clone(),
        });
        all.extend(out.results);
    }
    Ok((rows, all))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(subject: u32, seed: u64, acc: f64, f1: f64) -> FoldResult {
        FoldResult {
            fold: FoldSpec { test_subject: subject, val_subjects: vec![], train_subjects: vec![], seed: 0 },
            seed,
            mode: AblationMode::Full,
            discriminator: DiscriminatorKind::Ours,
            metrics: Metrics { accuracy: acc, macro_f1: f1, confusion: vec![] },
            n_test_windows: 1,
            selection: None,
            encoder_hash: String::new(),
            shift: None,
            history: TrainHistory::default(),
        }
    }

    #[test]
    fn identical_folds_have_zero_std() {
        let rs: Vec<FoldResult> = (1..=4).flat_map(|s| [result(s, 0, 0.8, 0.7), result(s, 1, 0.8, 0.7)]).collect();
        let agg = aggregate(&rs, AblationMode::Full, DiscriminatorKind::Ours).unwrap();
        assert_eq!(agg.folds.len(), 4);
        assert_eq!(agg.n_runs, 8);
        assert!((agg.accuracy.mean - 0.8).abs() < 1e-12);
        assert_eq!(agg.accuracy.std, 0.0);
    }

    #[test]
    fn seeds_averaged_before_std() {
        let rs = vec![result(1, 0, 0.6, 0.5), result(1, 1, 0.8, 0.7), result(2, 0, 1.0, 0.9), result(2, 1, 1.0, 0.9)];
        let agg = aggregate(&rs, AblationMode::Full, DiscriminatorKind::Ours).unwrap();
        assert!((agg.accuracy.mean - 0.85).abs() < 1e-12);
        // fold means 0.7 and 1.0: sample std = 0.3 / sqrt(2)
        assert!((agg.accuracy.std - 0.3 / 2f64.sqrt()).abs() < 1e-12);
        assert!(aggregate(&rs, AblationMode::SupervisedOnly, DiscriminatorKind::Ours).is_err());
    }

    #[test]
    fn job_count() {
        let cfg = LosoConfig::default();
        let jobs = loso_jobs(&(1..=8).collect::<Vec<_>>(), &cfg).unwrap();
        assert_eq!(jobs.len(), 16);
    }
}
