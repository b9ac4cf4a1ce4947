//! Desk-scale LOSO on the synthetic corpus: the two-step baseline against
//! the full adversarial pipeline, plus the latent shift per fold.
//!
//!     cargo run --release --example synthetic_loso

use std::time::Instant;

use invar_har::evaluation::run_loso;
use invar_har::presets::desk_synthetic;
use invar_har::trainer::AblationMode;

fn main() -> invar_har::Result<()> {
    let exp = desk_synthetic();
    let windows = exp.windows()?;
    println!("{} windows, {} subjects, {} classes", windows.len(), exp.spec.subjects.len(), exp.spec.num_classes());

    let started = Instant::now();
    let modes = [AblationMode::ThroughStep2, AblationMode::Full];
    let out = run_loso(&windows, &exp.spec.subjects, exp.spec.num_classes(), &exp.loso, &modes)?;
    for a in &out.aggregates {
        println!("{:<14} acc {}  F1 {}", a.mode.as_str(), a.accuracy, a.macro_f1);
    }
    for r in out.results.iter().filter(|r| r.mode == AblationMode::Full) {
        let s = r.shift.as_ref().expect("full runs measure shift");
        println!(
            "subject {} seed {}: acc {:.3}  W1 {:.4} -> {:.4}",
            r.fold.test_subject, r.seed, r.metrics.accuracy, s.step2.overall, s.step3.overall
        );
    }
    println!("{:.0} s", started.elapsed().as_secs_f64());
    Ok(())
}
