//! Three-step training schedule and the supervised-only baseline.
//!
//! * step 1: F and R learn to reconstruct windows of A
//! * step 2: F, R, C and D train jointly; F sees `L_C + L_R` only
//! * step 3: R frozen; per batch, (3.1) F and C descend the weighted
//!   adversarial objective with D frozen, then (3.2) D descends `L_D` with F
//!   and C frozen
//!
//! Each step starts from fresh optimizer state. Every sub-step snapshots the
//! blocks it declares frozen and aborts with [`Error::FreezeViolation`] if any
//! of them moved.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Metrics};
use crate::losses::{
    adversarial_loss, classification_loss, discrimination_loss, feature_step2_loss, feature_step31_loss, recon_loss,
    subject_confusion_loss, LossWeights,
};
use crate::model::{windows_tensor, BlockName, BundleSpec, DiscriminatorKind, ModelBundle, ModelConfig};
use crate::nn::{Adam, AdamConfig, Network, Tensor};
use crate::pairs::{build_pair_set, build_random_pair_set, pair_batches, scaled_target, PairSample, PairSet};
use crate::segmentation::{FoldData, WindowedSample};

const VAL_PAIRS_CAP: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step1Rates {
    pub f: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step2Rates {
    pub f: f64,
    pub r: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Step3Rates {
    pub f: f64,
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SupervisedRates {
    pub f: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs_step1: usize,
    pub epochs_step2: usize,
    pub epochs_step3: usize,
    /// Epochs of the supervised-only baseline; `None` means the sum of the
    /// three steps.
    pub supervised_epochs: Option<usize>,
    pub step1: Step1Rates,
    pub step2: Step2Rates,
    pub step3: Step3Rates,
    pub supervised: SupervisedRates,
    pub batch_step1: usize,
    pub batch_size: usize,
    pub weights: LossWeights,
    pub seeds: Vec<u64>,
    pub adam: AdamConfig,
    /// Pairs per class of `g` in the training pair set.
    pub pairs_per_class: usize,
    pub discriminator: DiscriminatorKind,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_step1: 20,
            epochs_step2: 10,
            epochs_step3: 150,
            supervised_epochs: None,
            step1: Step1Rates { f: 1e-4, r: 1e-4 },
            step2: Step2Rates { f: 1e-4, r: 1e-4, c: 1e-5, d: 1e-4 },
            step3: Step3Rates { f: 1e-3, c: 1e-4, d: 1e-4 },
            supervised: SupervisedRates { f: 1e-4, c: 1e-4 },
            batch_step1: 64,
            batch_size: 32,
            weights: LossWeights::default(),
            seeds: vec![0, 1],
            adam: AdamConfig::default(),
            pairs_per_class: 25_000,
            discriminator: DiscriminatorKind::Ours,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn supervised_epochs(&self) -> usize {
        self.supervised_epochs
            .unwrap_or(self.epochs_step1 + self.epochs_step2 + self.epochs_step3)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            self.step1.f,
            self.step1.r,
            self.step2.f,
            self.step2.r,
            self.step2.c,
            self.step2.d,
            self.step3.f,
            self.step3.c,
            self.step3.d,
            self.supervised.f,
            self.supervised.c,
        ];
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.epochs_step1 == 0 || self.epochs_step2 == 0 || self.epochs_step3 == 0 || self.supervised_epochs() == 0 {
            return Err(Error::Config("every step needs at least one epoch".into()));
        }
        if self.batch_step1 == 0 || self.batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.pairs_per_class == 0 {
            return Err(Error::Config("pairs_per_class must be positive".into()));
        }
        self.weights.validate()?;
        self.model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStep {
    Step1,
    Step2,
    Step3,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    SupervisedOnly,
    ThroughStep2,
    Full,
}

impl AblationMode {
    pub const ALL: [AblationMode; 3] = [AblationMode::SupervisedOnly, AblationMode::ThroughStep2, AblationMode::Full];

    pub fn as_str(&self) -> &'static str {
        match self {
            AblationMode::SupervisedOnly => "supervised_only",
            AblationMode::ThroughStep2 => "through_step2",
            AblationMode::Full => "full",
        }
    }

    /// Steps whose epochs are checkpoint candidates.
    fn candidate_steps(&self) -> &'static [TrainStep] {
        match self {
            AblationMode::SupervisedOnly => &[TrainStep::Supervised],
            AblationMode::ThroughStep2 => &[TrainStep::Step2],
            AblationMode::Full => &[TrainStep::Step2, TrainStep::Step3],
        }
    }
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised_only" | "supervised" | "superv" => Ok(AblationMode::SupervisedOnly),
            "through_step2" | "step2" => Ok(AblationMode::ThroughStep2),
            "full" | "ours" => Ok(AblationMode::Full),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValScore {
    pub accuracy: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-mean of each loss seen in the epoch.
    pub losses: BTreeMap<String, f64>,
    /// Optimizer steps per block.
    pub updates: BTreeMap<String, u64>,
    /// Batches dropped because they held no `g = 0` pair.
    pub skipped_batches: usize,
    pub freeze_checks: usize,
    pub val: Option<ValScore>,
    /// Discriminator accuracy on held-out validation pairs.
    pub val_disc_accuracy: Option<f64>,
    /// Excluded from serialisation so that records stay reproducible.
    #[serde(skip)]
    pub wall_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepHistory {
    pub step: TrainStep,
    pub epochs: Vec<EpochRecord>,
}

impl StepHistory {
    /// Per-epoch series of one loss.
    pub fn series(&self, loss: &str) -> Vec<f64> {
        self.epochs.iter().filter_map(|e| e.losses.get(loss).copied()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub segments: Vec<StepHistory>,
}

impl TrainHistory {
    pub fn segment(&self, step: TrainStep) -> Option<&StepHistory> {
        self.segments.iter().find(|s| s.step == step)
    }

    pub fn freeze_checks(&self) -> usize {
        self.segments.iter().flat_map(|s| &s.epochs).map(|e| e.freeze_checks).sum()
    }

    pub fn wall_s(&self) -> f64 {
        self.segments.iter().flat_map(|s| &s.epochs).map(|e| e.wall_s).sum()
    }
}

/// Called after every epoch; may fill the validation fields of the record.
pub trait EpochMonitor {
    fn end_of_epoch(&mut self, step: TrainStep, bundle: &ModelBundle, record: &mut EpochRecord) -> Result<()>;
}

pub struct NoMonitor;

impl EpochMonitor for NoMonitor {
    fn end_of_epoch(&mut self, _: TrainStep, _: &ModelBundle, _: &mut EpochRecord) -> Result<()> {
        Ok(())
    }
}

/// Where the discriminator's training signal comes from.
#[derive(Debug, Clone, Copy)]
pub enum DiscSource<'a> {
    /// Pair-based discriminators (`ours`, `D_b`).
    Pairs(&'a PairSet),
    /// Per-subject discriminator: labels are subject indices of the A batch.
    Subjects,
}

fn adam_for(net: &Network, lr: f64, cfg: &TrainConfig) -> Adam {
    Adam::new(lr, cfg.adam, &net.params().iter().map(|p| p.len()).collect::<Vec<_>>())
}

fn shuffled_batches(n: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(size).map(|c| c.to_vec()).collect()
}

fn batch_tensor(windows: &[WindowedSample], idx: &[usize]) -> Result<Tensor> {
    windows_tensor(&idx.iter().map(|&i| &windows[i]).collect::<Vec<_>>())
}

/// `[x_a(1..P), x_b(1..P)]` stacked along the batch axis.
fn pair_tensor(windows: &[WindowedSample], pairs: &[PairSample]) -> Result<Tensor> {
    let refs: Vec<&WindowedSample> = pairs
        .iter()
        .map(|p| &windows[p.index_a])
        .chain(pairs.iter().map(|p| &windows[p.index_b]))
        .collect();
    windows_tensor(&refs)
}

/// Latents of a stacked pair batch into discriminator input `z_a ⊕ z_b`.
fn pair_input(z: &Tensor) -> Result<Tensor> {
    let p = z.batch() / 2;
    Tensor::concat_features(&z.slice_batch(0, p), &z.slice_batch(p, 2 * p))
}

/// Undo [`pair_input`] for a gradient.
fn unpair_grad(grad: &Tensor) -> Result<Tensor> {
    let (a, b) = grad.split_features(grad.shape[1] / 2);
    Tensor::stack(&[&a, &b])
}

fn subject_lookup(train: &[WindowedSample]) -> BTreeMap<u32, usize> {
    let mut ids: Vec<u32> = train.iter().map(|w| w.s).collect();
    ids.sort_unstable();
    ids.dedup();
    ids.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
}

#[derive(Default)]
struct EpochStats {
    sums: BTreeMap<&'static str, (f64, usize)>,
    updates: BTreeMap<&'static str, u64>,
    skipped: usize,
    freeze_checks: usize,
}

impl EpochStats {
    fn loss(&mut self, name: &'static str, v: f64) {
        let e = self.sums.entry(name).or_default();
        e.0 += v;
        e.1 += 1;
    }

    fn update(&mut self, bundle: &mut ModelBundle, block: BlockName, opt: &mut Adam, grads: &crate::nn::Grads) -> Result<()> {
        bundle.apply_update(block, opt, grads)?;
        *self.updates.entry(block.as_str()).or_default() += 1;
        Ok(())
    }

    fn snapshot(&self, bundle: &mut ModelBundle, blocks: &[BlockName]) {
        for &b in blocks {
            bundle.snapshot(b);
        }
    }

    fn verify(&mut self, bundle: &ModelBundle, blocks: &[BlockName], context: &str) -> Result<()> {
        for &b in blocks {
            self.freeze_checks += 1;
            if !bundle.snapshot_and_verify_frozen(b) {
                return Err(Error::FreezeViolation(format!("{} changed during {context}", b.as_str())));
            }
        }
        Ok(())
    }

    fn finish(self, epoch: usize, started: Instant) -> EpochRecord {
        EpochRecord {
            epoch,
            losses: self
                .sums
                .into_iter()
                .map(|(k, (s, n))| (k.to_string(), s / n as f64))
                .collect(),
            updates: self.updates.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            skipped_batches: self.skipped,
            freeze_checks: self.freeze_checks,
            val: None,
            val_disc_accuracy: None,
            wall_s: started.elapsed().as_secs_f64(),
        }
    }
}

fn require_train(train: &[WindowedSample]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::Dataset("empty training set".into()));
    }
    Ok(())
}

fn require_pairs(bundle: &ModelBundle, source: &DiscSource) -> Result<()> {
    match (bundle.spec.discriminator, source) {
        (DiscriminatorKind::SubjectId, DiscSource::Subjects) => Ok(()),
        (DiscriminatorKind::SubjectId, _) | (_, DiscSource::Subjects) => Err(Error::InvalidArgument(
            "discriminator kind and training signal disagree".into(),
        )),
        (_, DiscSource::Pairs(set)) => {
            if set.is_empty() || set.count_class(0) != set.count_class(1) {
                return Err(Error::PairConstruction("pair set is empty or class-imbalanced".into()));
            }
            Ok(())
        }
    }
}

fn pair_labels(pairs: &[PairSample]) -> Vec<u8> {
    pairs.iter().map(|p| p.g).collect()
}

/// Step 1: autoencoder pre-training of F and R on A.
pub fn run_step1(
    bundle: &mut ModelBundle,
    train: &[WindowedSample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    monitor: &mut dyn EpochMonitor,
) -> Result<StepHistory> {
    require_train(train)?;
    let frozen = [BlockName::C, BlockName::D];
    bundle.freeze_only(&frozen);
    let mut opt_f = adam_for(&bundle.f, cfg.step1.f, cfg);
    let mut opt_r = adam_for(&bundle.r, cfg.step1.r, cfg);
    let mut epochs = Vec::with_capacity(cfg.epochs_step1);
    for epoch in 0..cfg.epochs_step1 {
        let started = Instant::now();
        let mut st = EpochStats::default();
        st.snapshot(bundle, &frozen);
        for idx in shuffled_batches(train.len(), cfg.batch_step1, rng) {
            let x = batch_tensor(train, &idx)?;
            let (z, tape_f) = bundle.f.forward_tape(&x)?;
            let (x_hat, tape_r) = bundle.r.forward_tape(&z)?;
            let lr = recon_loss(&x_hat, &x)?;
            let mut g_r = bundle.r.zero_grads();
            let dz = bundle.r.backward(&tape_r, lr.grad, Some(&mut g_r));
            let mut g_f = bundle.f.zero_grads();
            bundle.f.backward(&tape_f, dz, Some(&mut g_f));
            st.update(bundle, BlockName::F, &mut opt_f, &g_f)?;
            st.update(bundle, BlockName::R, &mut opt_r, &g_r)?;
            st.loss("L_R", lr.value);
        }
        st.verify(bundle, &frozen, "step 1")?;
        let mut rec = st.finish(epoch, started);
        monitor.end_of_epoch(TrainStep::Step1, bundle, &mut rec)?;
        epochs.push(rec);
    }
    Ok(StepHistory { step: TrainStep::Step1, epochs })
}

/// Step 2: joint supervised pre-training. All gradients of a batch are taken
/// at the same parameter point before any block is updated.
pub fn run_step2(
    bundle: &mut ModelBundle,
    train: &[WindowedSample],
    source: DiscSource,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    monitor: &mut dyn EpochMonitor,
) -> Result<StepHistory> {
    require_train(train)?;
    require_pairs(bundle, &source)?;
    let subjects = subject_lookup(train);
    bundle.freeze_only(&[]);
    let mut opt_f = adam_for(&bundle.f, cfg.step2.f, cfg);
    let mut opt_r = adam_for(&bundle.r, cfg.step2.r, cfg);
    let mut opt_c = adam_for(&bundle.c, cfg.step2.c, cfg);
    let mut opt_d = adam_for(&bundle.d, cfg.step2.d, cfg);
    let mut epochs = Vec::with_capacity(cfg.epochs_step2);
    for epoch in 0..cfg.epochs_step2 {
        let started = Instant::now();
        let mut st = EpochStats::default();
        let batches = shuffled_batches(train.len(), cfg.batch_size, rng);
        let pair_seed = rng.next_u64();
        let pbatches = match source {
            DiscSource::Pairs(set) => Some(pair_batches(set, batches.len(), pair_seed)?),
            DiscSource::Subjects => None,
        };
        for (bi, idx) in batches.iter().enumerate() {
            let xa = batch_tensor(train, idx)?;
            let ya: Vec<usize> = idx.iter().map(|&i| train[i].y).collect();
            let mut g_f = bundle.f.zero_grads();
            let mut g_r = bundle.r.zero_grads();
            let mut g_c = bundle.c.zero_grads();
            let mut g_d = bundle.d.zero_grads();

            let (za, tape_fa) = bundle.f.forward_tape(&xa)?;
            let (logits, tape_c) = bundle.c.forward_tape(&za)?;
            let lc = classification_loss(&logits, &ya)?;
            let dza = bundle.c.backward(&tape_c, lc.grad, Some(&mut g_c));
            bundle.f.backward(&tape_fa, dza, Some(&mut g_f));

            let (lr_value, ld_value) = match &pbatches {
                Some(pb) => {
                    let pairs = &pb[bi];
                    let xp = pair_tensor(train, pairs)?;
                    let (zp, tape_fp) = bundle.f.forward_tape(&xp)?;
                    let (xp_hat, tape_r) = bundle.r.forward_tape(&zp)?;
                    let lr = recon_loss(&xp_hat, &xp)?;
                    let dzp = bundle.r.backward(&tape_r, lr.grad, Some(&mut g_r));
                    bundle.f.backward(&tape_fp, dzp, Some(&mut g_f));
                    let (p, tape_d) = bundle.d.forward_tape(&pair_input(&zp)?)?;
                    let ld = discrimination_loss(&p, &pair_labels(pairs))?;
                    bundle.d.backward(&tape_d, ld.grad, Some(&mut g_d));
                    (lr.value, ld.value)
                }
                None => {
                    let (xa_hat, tape_r) = bundle.r.forward_tape(&za)?;
                    let lr = recon_loss(&xa_hat, &xa)?;
                    let dz = bundle.r.backward(&tape_r, lr.grad, Some(&mut g_r));
                    bundle.f.backward(&tape_fa, dz, Some(&mut g_f));
                    let sa: Vec<usize> = idx.iter().map(|&i| subjects[&train[i].s]).collect();
                    let (logits_s, tape_d) = bundle.d.forward_tape(&za)?;
                    let ld = classification_loss(&logits_s, &sa)?;
                    bundle.d.backward(&tape_d, ld.grad, Some(&mut g_d));
                    (lr.value, ld.value)
                }
            };
            st.update(bundle, BlockName::F, &mut opt_f, &g_f)?;
            st.update(bundle, BlockName::R, &mut opt_r, &g_r)?;
            st.update(bundle, BlockName::C, &mut opt_c, &g_c)?;
            st.update(bundle, BlockName::D, &mut opt_d, &g_d)?;
            st.loss("L_C", lc.value);
            st.loss("L_R", lr_value);
            st.loss("L_D", ld_value);
            st.loss("L_F", feature_step2_loss(lc.value, lr_value));
        }
        let mut rec = st.finish(epoch, started);
        monitor.end_of_epoch(TrainStep::Step2, bundle, &mut rec)?;
        epochs.push(rec);
    }
    Ok(StepHistory { step: TrainStep::Step2, epochs })
}

/// Step 3: alternating adversarial optimisation with R frozen throughout.
pub fn run_step3(
    bundle: &mut ModelBundle,
    train: &[WindowedSample],
    source: DiscSource,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    monitor: &mut dyn EpochMonitor,
) -> Result<StepHistory> {
    require_train(train)?;
    require_pairs(bundle, &source)?;
    let subjects = subject_lookup(train);
    let w = cfg.weights;
    let mut opt_f = adam_for(&bundle.f, cfg.step3.f, cfg);
    let mut opt_c = adam_for(&bundle.c, cfg.step3.c, cfg);
    let mut opt_d = adam_for(&bundle.d, cfg.step3.d, cfg);
    bundle.freeze_only(&[BlockName::R]);
    bundle.snapshot(BlockName::R);
    let mut epochs = Vec::with_capacity(cfg.epochs_step3);
    for epoch in 0..cfg.epochs_step3 {
        let started = Instant::now();
        let mut st = EpochStats::default();
        let batches = shuffled_batches(train.len(), cfg.batch_size, rng);
        let pair_seed = rng.next_u64();
        let pbatches = match source {
            DiscSource::Pairs(set) => Some(pair_batches(set, batches.len(), pair_seed)?),
            DiscSource::Subjects => None,
        };
        for (bi, idx) in batches.iter().enumerate() {
            let pairs = pbatches.as_ref().map(|pb| &pb[bi]);
            if let Some(pairs) = pairs {
                if pairs.iter().all(|p| p.g == 1) {
                    log::warn!("step 3 epoch {epoch}: batch {bi} has no g=0 pair, skipped");
                    st.skipped += 1;
                    continue;
                }
            }
            let xa = batch_tensor(train, idx)?;
            let ya: Vec<usize> = idx.iter().map(|&i| train[i].y).collect();
            let sa: Vec<usize> = idx.iter().map(|&i| subjects[&train[i].s]).collect();

            // 3.1: F and C move, D and R stay put
            let frozen31 = [BlockName::R, BlockName::D];
            bundle.freeze_only(&frozen31);
            st.snapshot(bundle, &[BlockName::D]);
            let mut g_f = bundle.f.zero_grads();
            let mut g_c = bundle.c.zero_grads();
            let (za, tape_fa) = bundle.f.forward_tape(&xa)?;
            let (logits, tape_c) = bundle.c.forward_tape(&za)?;
            let lc = classification_loss(&logits, &ya)?;
            let mut dza = bundle.c.backward(&tape_c, lc.grad.clone(), None).scale(w.w_c);
            bundle.c.backward(&tape_c, lc.grad, Some(&mut g_c));
            let (la_value, lr_value) = match pairs {
                Some(pairs) => {
                    let xp = pair_tensor(train, pairs)?;
                    let (zp, tape_fp) = bundle.f.forward_tape(&xp)?;
                    let (xp_hat, tape_r) = bundle.r.forward_tape(&zp)?;
                    let lr = recon_loss(&xp_hat, &xp)?;
                    let mut dzp = bundle.r.backward(&tape_r, lr.grad, None).scale(w.w_r);
                    let (p, tape_d) = bundle.d.forward_tape(&pair_input(&zp)?)?;
                    let la = adversarial_loss(&p, &pair_labels(pairs))?;
                    let dpair = bundle.d.backward(&tape_d, la.grad, None).scale(w.w_a);
                    dzp.add_assign(&unpair_grad(&dpair)?);
                    bundle.f.backward(&tape_fp, dzp, Some(&mut g_f));
                    (la.value, lr.value)
                }
                None => {
                    let (xa_hat, tape_r) = bundle.r.forward_tape(&za)?;
                    let lr = recon_loss(&xa_hat, &xa)?;
                    dza.add_assign(&bundle.r.backward(&tape_r, lr.grad, None).scale(w.w_r));
                    let (logits_s, tape_d) = bundle.d.forward_tape(&za)?;
                    let la = subject_confusion_loss(&logits_s)?;
                    dza.add_assign(&bundle.d.backward(&tape_d, la.grad, None).scale(w.w_a));
                    (la.value, lr.value)
                }
            };
            bundle.f.backward(&tape_fa, dza, Some(&mut g_f));
            st.update(bundle, BlockName::F, &mut opt_f, &g_f)?;
            st.update(bundle, BlockName::C, &mut opt_c, &g_c)?;
            st.verify(bundle, &frozen31, "step 3.1")?;

            // 3.2: only D moves
            let frozen32 = [BlockName::F, BlockName::C, BlockName::R];
            bundle.freeze_only(&frozen32);
            st.snapshot(bundle, &[BlockName::F, BlockName::C]);
            let mut g_d = bundle.d.zero_grads();
            let ld_value = match pairs {
                Some(pairs) => {
                    let zp = bundle.f.forward(&pair_tensor(train, pairs)?)?;
                    let (p, tape_d) = bundle.d.forward_tape(&pair_input(&zp)?)?;
                    let ld = discrimination_loss(&p, &pair_labels(pairs))?;
                    bundle.d.backward(&tape_d, ld.grad, Some(&mut g_d));
                    ld.value
                }
                None => {
                    let za = bundle.f.forward(&xa)?;
                    let (logits_s, tape_d) = bundle.d.forward_tape(&za)?;
                    let ld = classification_loss(&logits_s, &sa)?;
                    bundle.d.backward(&tape_d, ld.grad, Some(&mut g_d));
                    ld.value
                }
            };
            st.update(bundle, BlockName::D, &mut opt_d, &g_d)?;
            st.verify(bundle, &frozen32, "step 3.2")?;

            st.loss("L_C", lc.value);
            st.loss("L_R", lr_value);
            st.loss("L_A", la_value);
            st.loss("L_D", ld_value);
            st.loss("L_F", feature_step31_loss(la_value, lr_value, lc.value, &w));
        }
        let mut rec = st.finish(epoch, started);
        monitor.end_of_epoch(TrainStep::Step3, bundle, &mut rec)?;
        epochs.push(rec);
    }
    bundle.freeze_only(&[]);
    Ok(StepHistory { step: TrainStep::Step3, epochs })
}

/// Baseline: F and C trained end to end on `L_C` alone.
pub fn run_supervised(
    bundle: &mut ModelBundle,
    train: &[WindowedSample],
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    monitor: &mut dyn EpochMonitor,
) -> Result<StepHistory> {
    require_train(train)?;
    let frozen = [BlockName::R, BlockName::D];
    bundle.freeze_only(&frozen);
    let mut opt_f = adam_for(&bundle.f, cfg.supervised.f, cfg);
    let mut opt_c = adam_for(&bundle.c, cfg.supervised.c, cfg);
    let n_epochs = cfg.supervised_epochs();
    let mut epochs = Vec::with_capacity(n_epochs);
    for epoch in 0..n_epochs {
        let started = Instant::now();
        let mut st = EpochStats::default();
        st.snapshot(bundle, &frozen);
        for idx in shuffled_batches(train.len(), cfg.batch_size, rng) {
            let x = batch_tensor(train, &idx)?;
            let y: Vec<usize> = idx.iter().map(|&i| train[i].y).collect();
            let (z, tape_f) = bundle.f.forward_tape(&x)?;
            let (logits, tape_c) = bundle.c.forward_tape(&z)?;
            let lc = classification_loss(&logits, &y)?;
            let mut g_c = bundle.c.zero_grads();
            let dz = bundle.c.backward(&tape_c, lc.grad, Some(&mut g_c));
            let mut g_f = bundle.f.zero_grads();
            bundle.f.backward(&tape_f, dz, Some(&mut g_f));
            st.update(bundle, BlockName::F, &mut opt_f, &g_f)?;
            st.update(bundle, BlockName::C, &mut opt_c, &g_c)?;
            st.loss("L_C", lc.value);
        }
        st.verify(bundle, &frozen, "supervised training")?;
        let mut rec = st.finish(epoch, started);
        monitor.end_of_epoch(TrainStep::Supervised, bundle, &mut rec)?;
        epochs.push(rec);
    }
    bundle.freeze_only(&[]);
    Ok(StepHistory { step: TrainStep::Supervised, epochs })
}

/// Discriminator accuracy on a pair set (threshold 0.5).
pub fn pair_accuracy(bundle: &ModelBundle, windows: &[WindowedSample], set: &PairSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty pair set".into()));
    }
    let mut correct = 0usize;
    for chunk in set.pairs.chunks(128) {
        let z = bundle.f.forward(&pair_tensor(windows, chunk)?)?;
        let p = bundle.d.forward(&pair_input(&z)?)?;
        correct += p
            .data
            .iter()
            .zip(chunk)
            .filter(|(&p, pair)| u8::from(p > 0.5) == pair.g)
            .count();
    }
    Ok(correct as f64 / set.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub step: TrainStep,
    pub epoch: usize,
    pub val_macro_f1: f64,
}

/// Scores each epoch on the validation subjects and keeps the best bundle per
/// step (earliest epoch wins ties).
pub struct Validator<'a> {
    val: &'a [WindowedSample],
    val_pairs: Option<PairSet>,
    best: BTreeMap<TrainStep, (Selection, ModelBundle)>,
}

impl<'a> Validator<'a> {
    pub fn new(val: &'a [WindowedSample], val_pairs: Option<PairSet>) -> Self {
        Self { val, val_pairs, best: BTreeMap::new() }
    }

    /// Best checkpoint over the given steps, earlier steps first on ties.
    pub fn best_over(&self, steps: &[TrainStep]) -> Option<&(Selection, ModelBundle)> {
        let mut out: Option<&(Selection, ModelBundle)> = None;
        for s in steps {
            if let Some(cand) = self.best.get(s) {
                if out.is_none_or(|o| cand.0.val_macro_f1 > o.0.val_macro_f1) {
                    out = Some(cand);
                }
            }
        }
        out
    }
}

impl EpochMonitor for Validator<'_> {
    fn end_of_epoch(&mut self, step: TrainStep, bundle: &ModelBundle, record: &mut EpochRecord) -> Result<()> {
        if self.val.is_empty() {
            return Ok(());
        }
        let Metrics { accuracy, macro_f1, .. } = evaluate(bundle, self.val)?;
        record.val = Some(ValScore { accuracy, macro_f1 });
        if let Some(set) = &self.val_pairs {
            record.val_disc_accuracy = Some(pair_accuracy(bundle, self.val, set)?);
        }
        if step != TrainStep::Step1 {
            let better = self.best.get(&step).is_none_or(|(s, _)| macro_f1 > s.val_macro_f1);
            if better {
                let sel = Selection { step, epoch: record.epoch, val_macro_f1: macro_f1 };
                self.best.insert(step, (sel, bundle.clone()));
            }
        }
        Ok(())
    }
}

/// Output of training one fold under one ablation mode.
#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub mode: AblationMode,
    pub seed: u64,
    /// Checkpoint retained for evaluation.
    pub bundle: ModelBundle,
    pub selection: Option<Selection>,
    pub history: TrainHistory,
    /// F at the end of step 2 (adversarial modes only).
    pub encoder_step2: Option<Network>,
    /// F at the end of the last step the mode runs.
    pub encoder_final: Network,
}

pub fn bundle_spec(data: &FoldData, classes: usize, cfg: &TrainConfig) -> Result<BundleSpec> {
    let first = data
        .train
        .first()
        .ok_or_else(|| Error::Dataset(format!("fold {}: no training windows", data.fold.test_subject)))?;
    Ok(BundleSpec {
        window: first.window_len(),
        channels: first.num_channels(),
        classes,
        discriminator: cfg.discriminator,
        n_train_subjects: data.fold.train_subjects.len(),
        model: cfg.model.clone(),
    })
}

fn build_pairs(kind: DiscriminatorKind, windows: &[WindowedSample], target: usize, seed: u64) -> Result<PairSet> {
    match kind {
        DiscriminatorKind::PairRandom => build_random_pair_set(windows, target, seed),
        _ => build_pair_set(windows, target, seed),
    }
}

/// Train one fold under one mode.
pub fn train_fold(data: &FoldData, classes: usize, cfg: &TrainConfig, mode: AblationMode, seed: u64) -> Result<TrainedFold> {
    let mut out = train_fold_modes(data, classes, cfg, &[mode], seed)?;
    Ok(out.remove(0))
}

/// Train one fold under several modes. `through_step2` is the exact prefix of
/// `full`, so when both are requested a single run serves both. Results come
/// back in the order of `modes`.
pub fn train_fold_modes(
    data: &FoldData,
    classes: usize,
    cfg: &TrainConfig,
    modes: &[AblationMode],
    seed: u64,
) -> Result<Vec<TrainedFold>> {
    cfg.validate()?;
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no modes requested".into()));
    }
    let spec = bundle_spec(data, classes, cfg)?;
    let mut done: BTreeMap<AblationMode, TrainedFold> = BTreeMap::new();

    if modes.contains(&AblationMode::SupervisedOnly) {
        let mut bundle = ModelBundle::new(spec.clone(), seed)?;
        let mut rng = data_rng(seed);
        let mut val = Validator::new(&data.val, None);
        let seg = run_supervised(&mut bundle, &data.train, cfg, &mut rng, &mut val)?;
        let encoder_final = bundle.f.clone();
        let (selection, kept) = pick(&val, AblationMode::SupervisedOnly, bundle);
        done.insert(
            AblationMode::SupervisedOnly,
            TrainedFold {
                mode: AblationMode::SupervisedOnly,
                seed,
                bundle: kept,
                selection,
                history: TrainHistory { segments: vec![seg] },
                encoder_step2: None,
                encoder_final,
            },
        );
    }

    let want_full = modes.contains(&AblationMode::Full);
    let want_step2 = modes.contains(&AblationMode::ThroughStep2);
    if want_full || want_step2 {
        let mut bundle = ModelBundle::new(spec, seed)?;
        let mut rng = data_rng(seed);
        let pair_seed = rng.next_u64();
        let val_seed = rng.next_u64();
        let train_pairs = match cfg.discriminator {
            DiscriminatorKind::SubjectId => None,
            kind => Some(build_pairs(kind, &data.train, cfg.pairs_per_class, pair_seed)?),
        };
        let val_pairs = match (&train_pairs, data.val.is_empty()) {
            (Some(_), false) => {
                let target = scaled_target(cfg.pairs_per_class, data.val.len(), data.train.len()).min(VAL_PAIRS_CAP);
                build_pairs(cfg.discriminator, &data.val, target, val_seed).ok()
            }
            _ => None,
        };
        let source = match &train_pairs {
            Some(set) => DiscSource::Pairs(set),
            None => DiscSource::Subjects,
        };
        let mut val = Validator::new(&data.val, val_pairs);
        let s1 = run_step1(&mut bundle, &data.train, cfg, &mut rng, &mut val)?;
        let s2 = run_step2(&mut bundle, &data.train, source, cfg, &mut rng, &mut val)?;
        let encoder_step2 = bundle.f.clone();
        if want_step2 {
            let (selection, kept) = pick(&val, AblationMode::ThroughStep2, bundle.clone());
            done.insert(
                AblationMode::ThroughStep2,
                TrainedFold {
                    mode: AblationMode::ThroughStep2,
                    seed,
                    bundle: kept,
                    selection,
                    history: TrainHistory { segments: vec![s1.clone(), s2.clone()] },
                    encoder_step2: Some(encoder_step2.clone()),
                    encoder_final: encoder_step2.clone(),
                },
            );
        }
        if want_full {
            let s3 = run_step3(&mut bundle, &data.train, source, cfg, &mut rng, &mut val)?;
            let encoder_final = bundle.f.clone();
            let (selection, kept) = pick(&val, AblationMode::Full, bundle);
            done.insert(
                AblationMode::Full,
                TrainedFold {
                    mode: AblationMode::Full,
                    seed,
                    bundle: kept,
                    selection,
                    history: TrainHistory { segments: vec![s1, s2, s3] },
                    encoder_step2: Some(encoder_step2),
                    encoder_final,
                },
            );
        }
    }
    Ok(modes.iter().map(|m| done[m].clone()).collect())
}

/// Sampling generator of a run; weights use the same seed on other streams.
pub fn data_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(100);
    rng
}

fn pick(val: &Validator, mode: AblationMode, last: ModelBundle) -> (Option<Selection>, ModelBundle) {
    match val.best_over(mode.candidate_steps()) {
        Some((sel, bundle)) => {
            let mut b = bundle.clone();
            b.freeze_only(&[]);
            (Some(*sel), b)
        }
        None => (None, last),
    }
}
