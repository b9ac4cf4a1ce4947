//! One check per acceptance criterion. Each returns a short summary on
//! success and the first problem found on failure.

use std::collections::BTreeSet;
use std::time::Instant;

use invar_har::data::{generate_synthetic, DatasetSpec, SyntheticParams};
use invar_har::evaluation::metrics_from_predictions;
use invar_har::losses::adversarial_loss;
use invar_har::model::{BlockName, DiscriminatorKind, ModelBundle, ModelConfig};
use invar_har::nn::Tensor;
use invar_har::pairs::{build_pair_set, build_random_pair_set};
use invar_har::segmentation::{loso_splits, prepare_fold, segment_all, FoldData, WindowedSample};
use invar_har::shift::wasserstein_1d;
use invar_har::trainer::{
    bundle_spec, data_rng, run_step1, run_step2, run_step3, DiscSource, EpochMonitor, EpochRecord, TrainConfig,
    TrainStep,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{
    check_pair_set, grad_check, metrics_oracle, random_corpus, tiny_spec, w1_exhaustive, w1_sorted, GradCase,
    Objective,
};

pub type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Pair sets from random corpora satisfy every structural invariant.
pub fn pair_sets(n_corpora: u64) -> Outcome {
    let started = Instant::now();
    let mut total = 0;
    for seed in 0..n_corpora {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let n = rng.random_range(80..400);
        let subjects = rng.random_range(2..8);
        let activities = rng.random_range(1..6);
        let windows = random_corpus(&mut rng, n, subjects, activities);
        let target = rng.random_range(1..300);
        let same = build_pair_set(&windows, target, seed).map_err(|e| format!("corpus {seed}: {e}"))?;
        check_pair_set(&same, &windows, target).map_err(|e| format!("corpus {seed}, same-activity: {e}"))?;
        let any = build_random_pair_set(&windows, target, seed).map_err(|e| format!("corpus {seed}: {e}"))?;
        check_pair_set(&any, &windows, target).map_err(|e| format!("corpus {seed}, any-activity: {e}"))?;
        total += same.len() + any.len();
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 1.0, || format!("took {secs:.2} s"))?;
    Ok(format!("{total} pairs from {n_corpora} corpora, all valid ({secs:.3} s)"))
}

/// Appending same-subject pairs never changes the adversarial loss.
pub fn adversarial_subset(trials: u64) -> Outcome {
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let n = rng.random_range(1..20);
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let mut g: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        g[rng.random_range(0..n)] = 0;
        let base = adversarial_loss(&Tensor::new(vec![n, 1], p.clone()).unwrap(), &g).map_err(|e| e.to_string())?;
        let base_kept: Vec<f64> = base.grad.data.iter().zip(&g).filter(|(_, &g)| g == 0).map(|(&v, _)| v).collect();
        let extra = rng.random_range(1..20);
        for _ in 0..extra {
            let at = rng.random_range(0..=p.len());
            p.insert(at, rng.random_range(0.0..=1.0));
            g.insert(at, 1);
        }
        let m = p.len();
        let more = adversarial_loss(&Tensor::new(vec![m, 1], p.clone()).unwrap(), &g).map_err(|e| e.to_string())?;
        ensure(base.value.to_bits() == more.value.to_bits(), || {
            format!("trial {t}: {} became {} after adding g=1 pairs", base.value, more.value)
        })?;
        let kept: Vec<f64> = more.grad.data.iter().zip(&g).filter(|(_, &g)| g == 0).map(|(&v, _)| v).collect();
        ensure(kept == base_kept, || format!("trial {t}: gradient on g=0 pairs changed"))?;
        ensure(
            g.iter().zip(&more.grad.data).all(|(&g, &v)| g == 0 || v == 0.0),
            || format!("trial {t}: g=1 pair received gradient"),
        )?;
    }
    Ok(format!("{trials} batches, value and gradient bit-identical"))
}

/// Analytic gradients of every objective against central differences.
pub fn gradients() -> Outcome {
    let started = Instant::now();
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for (kind, objectives) in [
        (DiscriminatorKind::Ours, &Objective::PAIR[..]),
        (DiscriminatorKind::SubjectId, &Objective::SUBJECT[..]),
    ] {
        for seed in 0..2 {
            let bundle = ModelBundle::new(tiny_spec(kind), seed).map_err(|e| e.to_string())?;
            let case = GradCase::new(seed + 10);
            for &obj in objectives {
                let r = grad_check(&bundle, &case, obj, 24, seed);
                if let Some(f) = r.failures.first() {
                    return Err(f.clone());
                }
                ensure(r.value_gap < 1e-12, || format!("{obj:?}: value off by {}", r.value_gap))?;
                checked += r.checked;
                worst = worst.max(r.worst_rel);
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("{checked} parameters, worst relative error {worst:.1e} ({secs:.1} s)"))
}

pub fn tiny_fold() -> (FoldData, usize) {
    let params = SyntheticParams {
        n_subjects: 4,
        n_activities: 3,
        duration_s: 40.0,
        channels: 3,
        ..Default::default()
    };
    let spec = DatasetSpec::synthetic(4, 3, 32);
    let windows = segment_all(&generate_synthetic(&params).unwrap(), &spec);
    let folds = loso_splits(&spec.subjects, 1, 0).unwrap();
    (prepare_fold(&windows, &folds[0]).unwrap(), 3)
}

fn bits(bundle: &ModelBundle, b: BlockName) -> Vec<u64> {
    bundle.block(b).params().into_iter().flatten().map(|v| v.to_bits()).collect()
}

struct RWatch {
    reference: Vec<u64>,
    epochs: usize,
    moved: bool,
}

impl EpochMonitor for RWatch {
    fn end_of_epoch(&mut self, _: TrainStep, bundle: &ModelBundle, _: &mut EpochRecord) -> invar_har::Result<()> {
        self.epochs += 1;
        self.moved |= bits(bundle, BlockName::R) != self.reference;
        Ok(())
    }
}

/// R is bit-identical through step 3; every sub-step verified its frozen
/// blocks; and F, C, D really trained.
pub fn freeze() -> Outcome {
    let (data, classes) = tiny_fold();
    let cfg = TrainConfig {
        epochs_step1: 1,
        epochs_step2: 1,
        epochs_step3: 2,
        pairs_per_class: 60,
        model: ModelConfig { d_latent: 4, width_scale: 0.125, ..Default::default() },
        ..Default::default()
    };
    let mut out = Vec::new();
    for kind in DiscriminatorKind::ALL {
        let mut cfg = cfg.clone();
        cfg.discriminator = kind;
        let e = |e: invar_har::Error| format!("{}: {e}", kind.label());
        let mut bundle = ModelBundle::new(bundle_spec(&data, classes, &cfg).map_err(e)?, 3).map_err(e)?;
        let mut rng = data_rng(3);
        let pairs = match kind {
            DiscriminatorKind::Ours => Some(build_pair_set(&data.train, cfg.pairs_per_class, 5).map_err(e)?),
            DiscriminatorKind::PairRandom => {
                Some(build_random_pair_set(&data.train, cfg.pairs_per_class, 5).map_err(e)?)
            }
            DiscriminatorKind::SubjectId => None,
        };
        let source = pairs.as_ref().map_or(DiscSource::Subjects, DiscSource::Pairs);
        run_step1(&mut bundle, &data.train, &cfg, &mut rng, &mut invar_har::trainer::NoMonitor).map_err(e)?;
        run_step2(&mut bundle, &data.train, source, &cfg, &mut rng, &mut invar_har::trainer::NoMonitor)
            .map_err(e)?;
        let before: Vec<Vec<u64>> = BlockName::ALL.iter().map(|&b| bits(&bundle, b)).collect();
        let mut watch = RWatch { reference: before[1].clone(), epochs: 0, moved: false };
        let hist = run_step3(&mut bundle, &data.train, source, &cfg, &mut rng, &mut watch).map_err(e)?;
        ensure(watch.epochs == 2 && !watch.moved, || format!("{}: R moved during step 3", kind.label()))?;
        ensure(bits(&bundle, BlockName::R) == before[1], || format!("{}: R moved", kind.label()))?;
        for (i, b) in [(0, BlockName::F), (2, BlockName::C), (3, BlockName::D)] {
            ensure(bits(&bundle, b) != before[i], || format!("{}: {} never updated", kind.label(), b.as_str()))?;
        }
        let n_batches = data.train.len().div_ceil(cfg.batch_size);
        for rec in &hist.epochs {
            let ran = n_batches - rec.skipped_batches;
            // 3.1 verifies R and D, 3.2 verifies F, C and R
            ensure(rec.freeze_checks == 5 * ran && ran > 0, || {
                format!("{}: {} freeze checks for {ran} batches", kind.label(), rec.freeze_checks)
            })?;
            ensure(
                rec.updates.get("R").is_none()
                    && rec.updates.get("F") == Some(&(ran as u64))
                    && rec.updates.get("D") == Some(&(ran as u64)),
                || format!("{}: update counts {:?}", kind.label(), rec.updates),
            )?;
        }
        out.push(format!("{} {}", kind.label(), hist.epochs.iter().map(|r| r.freeze_checks).sum::<usize>()));
    }
    Ok(format!("R bit-identical; sub-step checks passed ({})", out.join(", ")))
}

fn key(w: &WindowedSample) -> (u32, usize, usize) {
    (w.s, w.y, w.start)
}

/// Test windows never reach train or validation, and the scaler is exactly
/// the per-channel min/max of the training subjects' raw windows.
pub fn loso_isolation() -> Outcome {
    let params = SyntheticParams { n_subjects: 6, n_activities: 3, duration_s: 40.0, ..Default::default() };
    let spec = DatasetSpec::synthetic(6, 3, 32);
    let windows = segment_all(&generate_synthetic(&params).map_err(|e| e.to_string())?, &spec);
    let folds = loso_splits(&spec.subjects, 2, 0).map_err(|e| e.to_string())?;
    ensure(folds.len() == 6, || format!("{} folds", folds.len()))?;
    for fold in &folds {
        let data = prepare_fold(&windows, fold).map_err(|e| e.to_string())?;
        let t = fold.test_subject;
        let test: BTreeSet<_> = data.test.iter().map(key).collect();
        let train: BTreeSet<_> = data.train.iter().map(key).collect();
        let val: BTreeSet<_> = data.val.iter().map(key).collect();
        ensure(!test.is_empty() && test.iter().all(|k| k.0 == t), || format!("fold {t}: wrong test windows"))?;
        ensure(test.is_disjoint(&train) && test.is_disjoint(&val) && train.is_disjoint(&val), || {
            format!("fold {t}: splits overlap")
        })?;
        ensure(!train.iter().chain(&val).any(|k| k.0 == t), || format!("fold {t}: test subject leaked"))?;
        let expected_total = windows.len();
        ensure(test.len() + train.len() + val.len() == expected_total, || format!("fold {t}: windows lost"))?;

        let raw_train: Vec<&WindowedSample> = windows.iter().filter(|w| fold.train_subjects.contains(&w.s)).collect();
        let c = raw_train[0].x.ncols();
        for j in 0..c {
            let col = raw_train.iter().flat_map(|w| w.x.column(j).to_vec());
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            ensure(data.scaler.min[j] == lo && data.scaler.max[j] == hi, || {
                format!("fold {t}: scaler channel {j} is not the train min/max")
            })?;
        }
        // test windows are scaled with the train statistics, unclipped
        let raw_test: Vec<&WindowedSample> = windows.iter().filter(|w| w.s == t).collect();
        for (raw, scaled) in raw_test.iter().zip(&data.test) {
            for ((r, c), &v) in raw.x.indexed_iter() {
                let (lo, hi) = (data.scaler.min[c], data.scaler.max[c]);
                let want = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                ensure(scaled.x[[r, c]] == want, || format!("fold {t}: test window scaled wrongly"))?;
            }
        }
    }
    Ok(format!("{} folds isolated; scalers match train-only min/max exactly", folds.len()))
}

/// The 1-D Wasserstein distance against order statistics and exhaustive
/// transport.
pub fn wasserstein() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let n = rng.random_range(1..=64);
        let scale = [1e-3, 1.0, 1e3][i % 3];
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let shift = rng.random_range(-2.0..2.0) * scale;
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0) * scale * 1.5 + shift).collect();
        let got = wasserstein_1d(&a, &b).map_err(|e| e.to_string())?;
        let want = w1_sorted(&a, &b);
        worst = worst.max((got - want).abs());
        ensure((got - want).abs() <= 1e-9, || format!("case {i}: {got} vs order statistics {want}"))?;
    }
    let mut small = 0;
    for na in 1..=6usize {
        for nb in 1..=6usize {
            let l = na * nb / gcd(na, nb);
            if l > 8 {
                continue;
            }
            for _ in 0..10 {
                // integer-valued samples exercise ties
                let a: Vec<f64> = (0..na).map(|_| f64::from(rng.random_range(-3..4))).collect();
                let b: Vec<f64> = (0..nb).map(|_| rng.random_range(-3.0..4.0)).collect();
                let got = wasserstein_1d(&a, &b).map_err(|e| e.to_string())?;
                let want = w1_exhaustive(&a, &b);
                worst = worst.max((got - want).abs());
                ensure((got - want).abs() <= 1e-9, || format!("{a:?} / {b:?}: {got} vs transport {want}"))?;
                small += 1;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    ensure(secs < 10.0, || format!("took {secs:.1} s"))?;
    Ok(format!("1000 order-statistic and {small} exhaustive cases, max error {worst:.1e} ({secs:.2} s)"))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Accuracy, macro-F1 and the confusion matrix against a hand count.
pub fn metrics(sets: u64) -> Outcome {
    for t in 0..sets {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + t);
        let k = rng.random_range(2..9);
        let n = rng.random_range(1..300);
        let skill = rng.random_range(0.0..1.0);
        // some classes may be absent from truth or predictions
        let used = rng.random_range(1..=k);
        let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..used)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&y| if rng.random_bool(skill) { y } else { rng.random_range(0..k) })
            .collect();
        let got = metrics_from_predictions(&truth, &pred, k).map_err(|e| e.to_string())?;
        let want = metrics_oracle(&truth, &pred, k);
        ensure(got.confusion == want.confusion, || format!("set {t}: confusion differs"))?;
        ensure(got.accuracy.to_bits() == want.accuracy.to_bits(), || {
            format!("set {t}: accuracy {} vs {}", got.accuracy, want.accuracy)
        })?;
        ensure(got.macro_f1.to_bits() == want.macro_f1.to_bits(), || {
            format!("set {t}: macro-F1 {} vs {}", got.macro_f1, want.macro_f1)
        })?;
        let (num, den) = want.macro_f1_exact;
        let exact = num as f64 / den as f64;
        ensure((got.macro_f1 - exact).abs() <= 4.0 * f64::EPSILON, || {
            format!("set {t}: macro-F1 {} vs exact {num}/{den}", got.macro_f1)
        })?;
    }
    Ok(format!("{sets} prediction sets match exactly"))
}
