//! Supervised baseline, steps 1-2 only, and the full pipeline on one fold,
//! with the checkpoint each mode selected on validation.
//!
//!     cargo run --release --example ablation

use invar_har::evaluation::evaluate;
use invar_har::presets::smoke_synthetic;
use invar_har::segmentation::{loso_splits, prepare_fold};
use invar_har::trainer::{train_fold_modes, AblationMode};

fn main() -> invar_har::Result<()> {
    let mut exp = smoke_synthetic();
    exp.loso.train.epochs_step3 = 8;
    let windows = exp.windows()?;
    let folds = loso_splits(&exp.spec.subjects, exp.loso.n_val, exp.loso.split_seed)?;
    let data = prepare_fold(&windows, &folds[0])?;
    println!("test subject {}, {} train windows", data.fold.test_subject, data.train.len());

    let trained = train_fold_modes(&data, exp.spec.num_classes(), &exp.loso.train, &AblationMode::ALL, 0)?;
    for t in &trained {
        let m = evaluate(&t.bundle, &data.test)?;
        let sel = t.selection.map_or("last epoch".into(), |s| format!("{:?} epoch {}", s.step, s.epoch));
        println!("{:<16} acc {:.3}  F1 {:.3}  ({sel})", t.mode.as_str(), m.accuracy, m.macro_f1);
    }
    Ok(())
}
