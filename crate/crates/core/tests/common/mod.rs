//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the code it checks.
#![allow(dead_code)]

pub mod criteria;

use std::collections::{BTreeMap, BTreeSet};

use invar_har::losses::{
    adversarial_loss, classification_loss, discrimination_loss, recon_loss, subject_confusion_loss, LossWeights,
};
use invar_har::model::{BlockName, BundleSpec, DiscriminatorKind, ModelBundle, ModelConfig};
use invar_har::nn::{Grads, Network, Tensor};
use invar_har::pairs::{PairSet, PairTask};
use invar_har::segmentation::WindowedSample;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------- W1

/// Equal-size W1: mean absolute difference of order statistics.
pub fn w1_sorted(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exhaustive optimal transport. Each sample is replicated up to the least
/// common multiple of the sizes so every atom carries the same mass, then
/// every matching is tried. Only for tiny inputs.
pub fn w1_exhaustive(a: &[f64], b: &[f64]) -> f64 {
    let l = a.len() / gcd(a.len(), b.len()) * b.len();
    assert!(l <= 8, "exhaustive oracle is limited to 8 atoms");
    let xa: Vec<f64> = a.iter().flat_map(|&v| std::iter::repeat(v).take(l / a.len())).collect();
    let xb: Vec<f64> = b.iter().flat_map(|&v| std::iter::repeat(v).take(l / b.len())).collect();
    permutations(l)
        .into_iter()
        .map(|p| p.iter().enumerate().map(|(i, &j)| (xa[i] - xb[j]).abs()).sum::<f64>() / l as f64)
        .fold(f64::INFINITY, f64::min)
}

// ---------------------------------------------------------------- metrics

pub struct OracleMetrics {
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Macro-F1 as an exact fraction `(numerator, denominator)`.
    pub macro_f1_exact: (u128, u128),
}

fn reduce(n: u128, d: u128) -> (u128, u128) {
    fn g(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            g(b, a % b)
        }
    }
    let k = g(n, d).max(1);
    (n / k, d / k)
}

pub fn metrics_oracle(truth: &[usize], pred: &[usize], k: usize) -> OracleMetrics {
    let mut confusion = vec![vec![0u64; k]; k];
    for i in 0..truth.len() {
        confusion[truth[i]][pred[i]] += 1;
    }
    let mut correct = 0u64;
    for (c, row) in confusion.iter().enumerate() {
        correct += row[c];
    }
    let mut f1_sum = 0.0;
    let mut exact = (0u128, 1u128);
    for c in 0..k {
        let tp = confusion[c][c];
        let predicted: u64 = (0..k).map(|r| confusion[r][c]).sum();
        let actual: u64 = confusion[c].iter().sum();
        // 2 tp / (2 tp + fp + fn) with fp = predicted - tp, fn = actual - tp
        let denom = predicted + actual;
        if denom > 0 {
            f1_sum += (2 * tp) as f64 / denom as f64;
            let (n, d) = (2 * tp as u128, denom as u128);
            exact = reduce(exact.0 * d + n * exact.1, exact.1 * d);
        }
    }
    OracleMetrics {
        confusion,
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: f1_sum / k as f64,
        macro_f1_exact: reduce(exact.0, exact.1 * k as u128),
    }
}

// ---------------------------------------------------------------- corpora

/// Windows with random subjects and activities; `x` encodes the index so
/// windows stay distinguishable.
pub fn random_corpus(rng: &mut ChaCha8Rng, n: usize, subjects: u32, activities: usize) -> Vec<WindowedSample> {
    (0..n)
        .map(|i| WindowedSample {
            x: Array2::from_elem((2, 1), i as f64),
            y: rng.random_range(0..activities),
            s: rng.random_range(1..=subjects),
            start: i,
        })
        .collect()
}

/// Pair-set invariants checked from first principles. Returns a description
/// of the first violation.
pub fn check_pair_set(set: &PairSet, windows: &[WindowedSample], target: usize) -> Result<(), String> {
    let mut counts = [0usize; 2];
    for (i, p) in set.pairs.iter().enumerate() {
        if p.index_a == p.index_b {
            return Err(format!("pair {i} repeats window {}", p.index_a));
        }
        let (a, b) = (&windows[p.index_a], &windows[p.index_b]);
        if set.task == PairTask::SameActivity && a.y != b.y {
            return Err(format!("pair {i} mixes activities {} and {}", a.y, b.y));
        }
        let same = a.s == b.s;
        match p.g {
            1 if same => counts[1] += 1,
            0 if !same => counts[0] += 1,
            g => return Err(format!("pair {i}: g = {g} but subjects {} / {}", a.s, b.s)),
        }
    }
    if counts != [target, target] {
        return Err(format!("class counts {counts:?}, want {target} each"));
    }
    Ok(())
}

// ---------------------------------------------------------------- gradients

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;
/// Below this magnitude both gradients count as zero; the finite difference
/// cannot resolve anything smaller at this step size.
pub const ZERO_FLOOR: f64 = 1e-8;

pub fn tiny_spec(discriminator: DiscriminatorKind) -> BundleSpec {
    BundleSpec {
        window: 16,
        channels: 2,
        classes: 3,
        discriminator,
        n_train_subjects: 3,
        model: ModelConfig { d_latent: 4, width_scale: 0.125, kernel: 3, widths: vec![32, 32] },
    }
}

/// Inputs for one gradient check: a batch of 4 windows, 4 pairs over 8
/// windows, labels, pair labels and subject indices.
pub struct GradCase {
    pub xa: Tensor,
    pub ya: Vec<usize>,
    pub sa: Vec<usize>,
    pub xp: Tensor,
    pub g: Vec<u8>,
}

impl GradCase {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = |b: usize| {
            let data = (0..b * 16 * 2).map(|_| rng.random_range(0.0..1.0)).collect();
            Tensor::new(vec![b, 16, 2], data).unwrap()
        };
        let xa = t(4);
        let xp = t(8);
        Self { xa, ya: vec![0, 2, 1, 2], sa: vec![1, 0, 2, 1], xp, g: vec![0, 1, 0, 1] }
    }
}

/// Every objective the trainer differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Recon,
    Classify,
    Discriminate,
    Adversarial,
    /// `L_C` on the batch plus `L_R` on both pair members.
    Step2Feature,
    /// `w_A L_A + w_R L_R + w_C L_C`.
    Step31Feature,
    /// Cross-entropy of the per-subject discriminator.
    SubjectId,
    /// Uniform-confusion objective against the per-subject discriminator.
    SubjectConfusion,
}

impl Objective {
    pub const PAIR: [Objective; 6] = [
        Objective::Recon,
        Objective::Classify,
        Objective::Discriminate,
        Objective::Adversarial,
        Objective::Step2Feature,
        Objective::Step31Feature,
    ];
    pub const SUBJECT: [Objective; 2] = [Objective::SubjectId, Objective::SubjectConfusion];

    /// Blocks the objective depends on.
    pub fn blocks(&self) -> &'static [BlockName] {
        use BlockName::*;
        match self {
            Objective::Recon => &[F, R],
            Objective::Classify => &[F, C],
            Objective::Discriminate | Objective::Adversarial => &[F, D],
            Objective::Step2Feature => &[F, R, C],
            Objective::Step31Feature => &[F, R, C, D],
            Objective::SubjectId | Objective::SubjectConfusion => &[F, D],
        }
    }
}

fn pair_concat(z: &Tensor) -> Tensor {
    let p = z.batch() / 2;
    Tensor::concat_features(&z.slice_batch(0, p), &z.slice_batch(p, 2 * p)).unwrap()
}

fn pair_split(grad: &Tensor) -> Tensor {
    let (a, b) = grad.split_features(grad.shape[1] / 2);
    Tensor::stack(&[&a, &b]).unwrap()
}

fn zero(net: &Network) -> Grads {
    net.zero_grads()
}

/// Value and analytic gradient of `obj` w.r.t. every block (untouched blocks
/// get zeros).
pub fn analytic(bundle: &ModelBundle, case: &GradCase, obj: Objective) -> (f64, BTreeMap<BlockName, Grads>) {
    let w = LossWeights::default();
    let mut g: BTreeMap<BlockName, Grads> = BlockName::ALL.iter().map(|&b| (b, zero(bundle.block(b)))).collect();
    let mut value = 0.0;
    let run = |coef: f64, part: Part, g: &mut BTreeMap<BlockName, Grads>| {
        let on_pairs = matches!(part, Part::ReconPairs | Part::Disc | Part::Adv);
        let x = if on_pairs { &case.xp } else { &case.xa };
        let (z, tape_f) = bundle.f.forward_tape(x).unwrap();
        let (head, v, grad_out) = match part {
            Part::ReconBatch | Part::ReconPairs => {
                let (out, tape) = bundle.r.forward_tape(&z).unwrap();
                let l = recon_loss(&out, x).unwrap();
                (BlockName::R, l.value, (tape, l.grad))
            }
            Part::Classify => {
                let (out, tape) = bundle.c.forward_tape(&z).unwrap();
                let l = classification_loss(&out, &case.ya).unwrap();
                (BlockName::C, l.value, (tape, l.grad))
            }
            Part::Disc | Part::Adv => {
                let (out, tape) = bundle.d.forward_tape(&pair_concat(&z)).unwrap();
                let l = if part == Part::Disc {
                    discrimination_loss(&out, &case.g).unwrap()
                } else {
                    adversarial_loss(&out, &case.g).unwrap()
                };
                (BlockName::D, l.value, (tape, l.grad))
            }
            Part::SubjectCe | Part::Confusion => {
                let (out, tape) = bundle.d.forward_tape(&z).unwrap();
                let l = if part == Part::SubjectCe {
                    classification_loss(&out, &case.sa).unwrap()
                } else {
                    subject_confusion_loss(&out).unwrap()
                };
                (BlockName::D, l.value, (tape, l.grad))
            }
        };
        let (tape, grad) = grad_out;
        let net = bundle.block(head);
        let mut gh = zero(net);
        let mut dz = net.backward(&tape, grad.scale(coef), Some(&mut gh));
        g.get_mut(&head).unwrap().add(&gh);
        if matches!(part, Part::Disc | Part::Adv) {
            dz = pair_split(&dz);
        }
        let mut gf = zero(&bundle.f);
        bundle.f.backward(&tape_f, dz, Some(&mut gf));
        g.get_mut(&BlockName::F).unwrap().add(&gf);
        coef * v
    };
    for (coef, part) in parts(obj, &w) {
        value += run(coef, part, &mut g);
    }
    (value, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    ReconBatch,
    ReconPairs,
    Classify,
    Disc,
    Adv,
    SubjectCe,
    Confusion,
}

fn parts(obj: Objective, w: &LossWeights) -> Vec<(f64, Part)> {
    match obj {
        Objective::Recon => vec![(1.0, Part::ReconBatch)],
        Objective::Classify => vec![(1.0, Part::Classify)],
        Objective::Discriminate => vec![(1.0, Part::Disc)],
        Objective::Adversarial => vec![(1.0, Part::Adv)],
        Objective::Step2Feature => vec![(1.0, Part::Classify), (1.0, Part::ReconPairs)],
        Objective::Step31Feature => {
            vec![(w.w_a, Part::Adv), (w.w_r, Part::ReconPairs), (w.w_c, Part::Classify)]
        }
        Objective::SubjectId => vec![(1.0, Part::SubjectCe)],
        Objective::SubjectConfusion => vec![(1.0, Part::Confusion)],
    }
}

/// Forward-only value of `obj`, written out directly from the loss
/// definitions rather than through the loss module.
pub fn forward_value(bundle: &ModelBundle, case: &GradCase, obj: Objective) -> f64 {
    let w = LossWeights::default();
    let eps = 1e-7;
    let mse = |a: &Tensor, b: &Tensor| {
        a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64
    };
    let ce = |logits: &Tensor, y: &[usize]| {
        (0..logits.batch())
            .map(|i| {
                let row = logits.row(i);
                let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
                lse - row[y[i]]
            })
            .sum::<f64>()
            / logits.batch() as f64
    };
    let probs = |x: &Tensor| {
        let z = bundle.f.forward(x).unwrap();
        bundle.d.forward(&pair_concat(&z)).unwrap().data
    };
    let value = |part: Part| -> f64 {
        match part {
            Part::ReconBatch => mse(&bundle.r.forward(&bundle.f.forward(&case.xa).unwrap()).unwrap(), &case.xa),
            Part::ReconPairs => mse(&bundle.r.forward(&bundle.f.forward(&case.xp).unwrap()).unwrap(), &case.xp),
            Part::Classify => ce(&bundle.c.forward(&bundle.f.forward(&case.xa).unwrap()).unwrap(), &case.ya),
            Part::Disc => {
                let p = probs(&case.xp);
                p.iter()
                    .zip(&case.g)
                    .map(|(&p, &g)| {
                        let p = p.clamp(eps, 1.0 - eps);
                        if g == 1 {
                            -p.ln()
                        } else {
                            -(1.0 - p).ln()
                        }
                    })
                    .sum::<f64>()
                    / p.len() as f64
            }
            Part::Adv => {
                let p = probs(&case.xp);
                let zeros: Vec<f64> = p.iter().zip(&case.g).filter(|(_, &g)| g == 0).map(|(&p, _)| p).collect();
                zeros.iter().map(|p| -p.clamp(eps, 1.0 - eps).ln()).sum::<f64>() / zeros.len() as f64
            }
            Part::SubjectCe => ce(&bundle.d.forward(&bundle.f.forward(&case.xa).unwrap()).unwrap(), &case.sa),
            Part::Confusion => {
                let logits = bundle.d.forward(&bundle.f.forward(&case.xa).unwrap()).unwrap();
                let n = logits.shape[1];
                (0..logits.batch())
                    .map(|i| {
                        let row = logits.row(i);
                        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
                        row.iter().map(|v| lse - v).sum::<f64>() / n as f64
                    })
                    .sum::<f64>()
                    / logits.batch() as f64
            }
        }
    };
    parts(obj, &w).into_iter().map(|(c, p)| c * value(p)).sum()
}

fn block_mut(bundle: &mut ModelBundle, b: BlockName) -> &mut Network {
    match b {
        BlockName::F => &mut bundle.f,
        BlockName::R => &mut bundle.r,
        BlockName::C => &mut bundle.c,
        BlockName::D => &mut bundle.d,
    }
}

pub struct GradReport {
    pub checked: usize,
    pub worst_rel: f64,
    pub failures: Vec<String>,
    /// Analytic forward value vs the direct definition.
    pub value_gap: f64,
}

/// Central differences on up to `per_tensor` entries of every parameter
/// tensor of the blocks `obj` depends on. Blocks it does not depend on must
/// get exactly zero analytic gradient.
pub fn grad_check(bundle: &ModelBundle, case: &GradCase, obj: Objective, per_tensor: usize, seed: u64) -> GradReport {
    let (value, grads) = analytic(bundle, case, obj);
    let mut report = GradReport {
        checked: 0,
        worst_rel: 0.0,
        failures: Vec::new(),
        value_gap: (value - forward_value(bundle, case, obj)).abs(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = bundle.clone();
    for b in BlockName::ALL {
        let g = &grads[&b];
        if !obj.blocks().contains(&b) {
            if g.flat().iter().any(|&v| v != 0.0) {
                report.failures.push(format!("{obj:?}: non-zero gradient on unrelated block {}", b.as_str()));
            }
            continue;
        }
        let names = bundle.block(b).param_names();
        for (t, name) in names.iter().enumerate() {
            let len = g.0[t].len();
            let picks: BTreeSet<usize> = if len <= per_tensor {
                (0..len).collect()
            } else {
                (0..per_tensor).map(|_| rng.random_range(0..len)).collect()
            };
            for i in picks {
                let orig = bundle.block(b).params()[t][i];
                block_mut(&mut probe, b).params_mut()[t][i] = orig + FD_STEP;
                let up = forward_value(&probe, case, obj);
                block_mut(&mut probe, b).params_mut()[t][i] = orig - FD_STEP;
                let down = forward_value(&probe, case, obj);
                block_mut(&mut probe, b).params_mut()[t][i] = orig;
                let numeric = (up - down) / (2.0 * FD_STEP);
                let a = g.0[t][i];
                let scale = a.abs().max(numeric.abs());
                report.checked += 1;
                if scale < ZERO_FLOOR {
                    continue;
                }
                let rel = (a - numeric).abs() / scale;
                report.worst_rel = report.worst_rel.max(rel);
                if rel > REL_TOL {
                    report.failures.push(format!(
                        "{obj:?} {}.{name}[{i}]: analytic {a:.6e} vs numeric {numeric:.6e} (rel {rel:.2e})",
                        b.as_str()
                    ));
                }
            }
        }
    }
    report
}
