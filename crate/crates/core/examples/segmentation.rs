//! Sliding windows, LOSO folds and the train-only min-max scaler.
//!
//!     cargo run --example segmentation

use invar_har::data::generate_synthetic;
use invar_har::presets::smoke_synthetic;
use invar_har::segmentation::{loso_splits, prepare_fold, segment_all};

fn main() -> invar_har::Result<()> {
    let exp = smoke_synthetic();
    let recordings = generate_synthetic(&exp.params)?;
    let windows = segment_all(&recordings, &exp.spec);
    println!(
        "{} recordings -> {} windows of {} x {} (stride {})",
        recordings.len(),
        windows.len(),
        exp.spec.window_size,
        windows[0].num_channels(),
        exp.spec.stride()
    );
    for fold in loso_splits(&exp.spec.subjects, 1, 0)? {
        let data = prepare_fold(&windows, &fold)?;
        println!(
            "test {} | val {:?} | train {:?} | windows {}/{}/{} | channel 0 fitted min/max [{:.3}, {:.3}]",
            fold.test_subject,
            fold.val_subjects,
            fold.train_subjects,
            data.train.len(),
            data.val.len(),
            data.test.len(),
            data.scaler.min[0],
            data.scaler.max[0]
        );
    }
    Ok(())
}
