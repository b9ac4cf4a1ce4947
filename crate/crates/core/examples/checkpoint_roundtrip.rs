//! Save a trained bundle as safetensors and load it back.
//!
//!     cargo run --example checkpoint_roundtrip

use invar_har::model::ModelBundle;
use invar_har::presets::smoke_synthetic;
use invar_har::segmentation::{loso_splits, prepare_fold};
use invar_har::trainer::{train_fold, AblationMode};

fn main() -> invar_har::Result<()> {
    let exp = smoke_synthetic();
    let windows = exp.windows()?;
    let folds = loso_splits(&exp.spec.subjects, exp.loso.n_val, 0)?;
    let data = prepare_fold(&windows, &folds[0])?;
    let trained = train_fold(&data, exp.spec.num_classes(), &exp.loso.train, AblationMode::Full, 0)?;

    let dir = tempfile_dir();
    let path = dir.join("full.safetensors");
    trained.bundle.save_checkpoint(&path)?;
    let loaded = ModelBundle::load_checkpoint(&path)?;

    let test: Vec<_> = data.test.iter().collect();
    let same = trained.bundle.predict(&test)? == loaded.predict(&test)?;
    println!(
        "{} bytes, {} parameters, predictions identical: {same}",
        std::fs::metadata(&path)?.len(),
        loaded.f.num_params() + loaded.r.num_params() + loaded.c.num_params() + loaded.d.num_params()
    );
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    let d = std::env::temp_dir().join("invar_har_checkpoint");
    std::fs::create_dir_all(&d).expect("temp dir");
    d
}
