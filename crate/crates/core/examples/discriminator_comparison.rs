//! The three discrimination tasks (per-subject, random pairs, same-activity
//! pairs) with the encoder, reconstructor and classifier held fixed.
//!
//!     cargo run --release --example discriminator_comparison

use invar_har::evaluation::compare_discriminators;
use invar_har::presets::smoke_synthetic;

fn main() -> invar_har::Result<()> {
    let mut exp = smoke_synthetic();
    exp.loso.train.epochs_step3 = 6;
    let windows = exp.windows()?;
    let (rows, _) = compare_discriminators(&windows, &exp.spec.subjects, exp.spec.num_classes(), &exp.loso)?;
    println!("| | Accuracy | F1-Score_M |");
    for r in &rows {
        println!("| {} | {} | {} |", r.label, r.aggregate.accuracy, r.aggregate.macro_f1);
    }
    assert!(rows.iter().all(|r| r.encoder_hash == rows[0].encoder_hash));
    Ok(())
}
