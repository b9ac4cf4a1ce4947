//! Construction of the pair set used by the discrimination task.
//!
//! Every pair holds two distinct windows. For the same-activity task both
//! windows share an activity and `g = 1` exactly when they come from the same
//! subject. Both classes of `g` receive exactly `per_class_target` pairs.
//! Pairs are stored as indices into the window list they were built from.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::WindowedSample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairSample {
    pub index_a: usize,
    pub index_b: usize,
    pub y_a: usize,
    pub y_b: usize,
    pub s_a: u32,
    pub s_b: u32,
    /// 1 when both windows come from the same subject.
    pub g: u8,
}

impl PairSample {
    /// Shared activity, when the two windows have one.
    pub fn activity(&self) -> Option<usize> {
        (self.y_a == self.y_b).then_some(self.y_a)
    }
}

/// Which constraint the pairs obey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairTask {
    /// Both windows share the activity label.
    SameActivity,
    /// Windows drawn over the whole set, labelled by subject equality only.
    AnyActivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<PairSample>,
    pub per_class_target: usize,
    pub seed: u64,
    pub task: PairTask,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn count_class(&self, g: u8) -> usize {
        self.pairs.iter().filter(|p| p.g == g).count()
    }

    /// Check every structural invariant against the source windows.
    pub fn validate(&self, windows: &[WindowedSample]) -> Result<()> {
        for (i, p) in self.pairs.iter().enumerate() {
            let bad = |msg: &str| Err(Error::PairConstruction(format!("pair {i}: {msg}")));
            if p.index_a == p.index_b {
                return bad("identical windows");
            }
            let (Some(a), Some(b)) = (windows.get(p.index_a), windows.get(p.index_b)) else {
                return bad("index out of range");
            };
            if a.y != p.y_a || b.y != p.y_b || a.s != p.s_a || b.s != p.s_b {
                return bad("metadata disagrees with windows");
            }
            if self.task == PairTask::SameActivity && p.y_a != p.y_b {
                return bad("activities differ");
            }
            if (p.g == 1) != (p.s_a == p.s_b) || p.g > 1 {
                return bad("g does not match subject equality");
            }
        }
        if self.count_class(0) != self.per_class_target || self.count_class(1) != self.per_class_target {
            return Err(Error::PairConstruction("pair classes are not balanced".into()));
        }
        Ok(())
    }
}

struct Index {
    /// activity -> subject -> window indices
    cells: BTreeMap<usize, BTreeMap<u32, Vec<usize>>>,
    by_subject: BTreeMap<u32, Vec<usize>>,
}

impl Index {
    fn new(windows: &[WindowedSample]) -> Self {
        let mut cells: BTreeMap<usize, BTreeMap<u32, Vec<usize>>> = BTreeMap::new();
        let mut by_subject: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, w) in windows.iter().enumerate() {
            cells.entry(w.y).or_default().entry(w.s).or_default().push(i);
            by_subject.entry(w.s).or_default().push(i);
        }
        Self { cells, by_subject }
    }
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

fn pick_two(rng: &mut ChaCha8Rng, len: usize) -> (usize, usize) {
    let v = rand::seq::index::sample(rng, len, 2);
    (v.index(0), v.index(1))
}

fn make(windows: &[WindowedSample], a: usize, b: usize) -> PairSample {
    let (wa, wb) = (&windows[a], &windows[b]);
    PairSample {
        index_a: a,
        index_b: b,
        y_a: wa.y,
        y_b: wb.y,
        s_a: wa.s,
        s_b: wb.s,
        g: u8::from(wa.s == wb.s),
    }
}

/// Balanced same-activity pair set. The activity is drawn uniformly among
/// feasible activities, then the subject(s), then the window(s). Duplicate
/// pairs may occur when the combinatorial space is small.
pub fn build_pair_set(windows: &[WindowedSample], per_class_target: usize, seed: u64) -> Result<PairSet> {
    let index = Index::new(windows);
    // g = 1: (activity, [windows of each subject with >= 2 windows])
    let same: Vec<(usize, Vec<&Vec<usize>>)> = index
        .cells
        .iter()
        .map(|(&y, subj)| (y, subj.values().filter(|v| v.len() >= 2).collect::<Vec<_>>()))
        .filter(|(_, v)| !v.is_empty())
        .collect();
    // g = 0: activities observed for >= 2 subjects
    let diff: Vec<(usize, Vec<&Vec<usize>>)> = index
        .cells
        .iter()
        .map(|(&y, subj)| (y, subj.values().collect::<Vec<_>>()))
        .filter(|(_, v)| v.len() >= 2)
        .collect();
    if per_class_target > 0 {
        if same.is_empty() {
            return Err(Error::PairConstruction(
                "class g=1 infeasible: no subject has two windows of one activity".into(),
            ));
        }
        if diff.is_empty() {
            return Err(Error::PairConstruction(
                "class g=0 infeasible: no activity is shared by two subjects".into(),
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(2 * per_class_target);
    for _ in 0..per_class_target {
        let (_, cells) = pick(&mut rng, &same);
        let cell = *pick(&mut rng, cells);
        let (i, j) = pick_two(&mut rng, cell.len());
        pairs.push(make(windows, cell[i], cell[j]));

        let (_, subjects) = pick(&mut rng, &diff);
        let (i, j) = pick_two(&mut rng, subjects.len());
        let a = *pick(&mut rng, subjects[i]);
        let b = *pick(&mut rng, subjects[j]);
        pairs.push(make(windows, a, b));
    }
    Ok(PairSet {
        pairs,
        per_class_target,
        seed,
        task: PairTask::SameActivity,
    })
}

/// Balanced pair set without the activity constraint: windows are drawn over
/// the whole set and labelled by subject equality only.
pub fn build_random_pair_set(windows: &[WindowedSample], per_class_target: usize, seed: u64) -> Result<PairSet> {
    let index = Index::new(windows);
    let subjects: Vec<&Vec<usize>> = index.by_subject.values().collect();
    let multi: Vec<&Vec<usize>> = subjects.iter().copied().filter(|v| v.len() >= 2).collect();
    if per_class_target > 0 {
        if multi.is_empty() {
            return Err(Error::PairConstruction("class g=1 infeasible: no subject has two windows".into()));
        }
        if subjects.len() < 2 {
            return Err(Error::PairConstruction("class g=0 infeasible: fewer than two subjects".into()));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(2 * per_class_target);
    for _ in 0..per_class_target {
        let cell = *pick(&mut rng, &multi);
        let (i, j) = pick_two(&mut rng, cell.len());
        pairs.push(make(windows, cell[i], cell[j]));

        let (i, j) = pick_two(&mut rng, subjects.len());
        let a = *pick(&mut rng, subjects[i]);
        let b = *pick(&mut rng, subjects[j]);
        pairs.push(make(windows, a, b));
    }
    Ok(PairSet {
        pairs,
        per_class_target,
        seed,
        task: PairTask::AnyActivity,
    })
}

/// Per-class target for a validation pair set, proportional to the window
/// counts (at least 1).
pub fn scaled_target(train_target: usize, n_val_windows: usize, n_train_windows: usize) -> usize {
    if n_train_windows == 0 {
        return train_target;
    }
    ((train_target as f64 * n_val_windows as f64 / n_train_windows as f64).round() as usize).max(1)
}

/// Shuffle and split into exactly `n_batches` contiguous batches whose sizes
/// differ by at most one (larger batches first).
pub fn pair_batches(pair_set: &PairSet, n_batches: usize, seed: u64) -> Result<Vec<Vec<PairSample>>> {
    let n = pair_set.len();
    if n_batches == 0 || n_batches > n {
        return Err(Error::InvalidArgument(format!(
            "cannot split {n} pairs into {n_batches} batches"
        )));
    }
    let mut pairs = pair_set.pairs.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let base = n / n_batches;
    let extra = n % n_batches;
    let mut out = Vec::with_capacity(n_batches);
    let mut it = pairs.into_iter();
    for b in 0..n_batches {
        let size = base + usize::from(b < extra);
        out.push(it.by_ref().take(size).collect());
    }
    Ok(out)
}
