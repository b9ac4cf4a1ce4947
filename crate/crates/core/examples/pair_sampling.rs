//! Build the same-activity pair set and the activity-agnostic one from a
//! small synthetic corpus and show how they differ.
//!
//!     cargo run --example pair_sampling

use std::collections::BTreeMap;

use invar_har::pairs::{build_pair_set, build_random_pair_set, pair_batches, PairSet};
use invar_har::presets::smoke_synthetic;

fn describe(name: &str, set: &PairSet) {
    let same_activity = set.pairs.iter().filter(|p| p.activity().is_some()).count();
    let mut per_activity: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &set.pairs {
        if let Some(y) = p.activity() {
            *per_activity.entry(y).or_default() += 1;
        }
    }
    println!(
        "{name}: {} pairs, g=1 {} / g=0 {}, same activity {same_activity}, by activity {per_activity:?}",
        set.len(),
        set.count_class(1),
        set.count_class(0)
    );
}

fn main() -> invar_har::Result<()> {
    let windows = smoke_synthetic().windows()?;
    let same = build_pair_set(&windows, 500, 1)?;
    same.validate(&windows)?;
    describe("same-activity", &same);
    describe("any-activity ", &build_random_pair_set(&windows, 500, 1)?);

    let batches = pair_batches(&same, 7, 2)?;
    let sizes: Vec<usize> = batches.iter().map(Vec::len).collect();
    println!("7 batches: sizes {sizes:?}");
    let no_negatives = batches.iter().filter(|b| b.iter().all(|p| p.g == 1)).count();
    println!("batches without a g=0 pair: {no_negatives}");
    Ok(())
}
