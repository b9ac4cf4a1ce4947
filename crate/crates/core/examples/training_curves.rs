//! Per-epoch losses of a full run, printed and drawn as an SVG.
//!
//!     cargo run --release --example training_curves -- [out.svg]

use invar_har::plot::line_chart;
use invar_har::presets::smoke_synthetic;
use invar_har::segmentation::{loso_splits, prepare_fold};
use invar_har::trainer::{train_fold, AblationMode, TrainStep};

fn main() -> invar_har::Result<()> {
    let mut exp = smoke_synthetic();
    exp.loso.train.epochs_step3 = 10;
    let windows = exp.windows()?;
    let folds = loso_splits(&exp.spec.subjects, exp.loso.n_val, 0)?;
    let data = prepare_fold(&windows, &folds[0])?;
    let t = train_fold(&data, exp.spec.num_classes(), &exp.loso.train, AblationMode::Full, 0)?;

    for seg in &t.history.segments {
        for e in &seg.epochs {
            let losses: Vec<String> = e.losses.iter().map(|(k, v)| format!("{k} {v:.4}")).collect();
            let f1 = e.val.as_ref().map_or(String::new(), |v| format!("  val F1 {:.3}", v.macro_f1));
            println!("{:?} {:>2}: {}{f1}", seg.step, e.epoch, losses.join("  "));
        }
    }
    let step3 = t.history.segment(TrainStep::Step3).expect("full run has step 3");
    let xs: Vec<f64> = (0..step3.epochs.len()).map(|e| e as f64).collect();
    let series: Vec<(String, Vec<f64>)> =
        ["L_A", "L_D", "L_C"].iter().map(|k| (k.to_string(), step3.series(k))).collect();
    let out = std::env::args().nth(1).unwrap_or_else(|| "step3_losses.svg".into());
    std::fs::write(&out, line_chart("Step 3 losses", "epoch", "loss", &xs, &series))?;
    println!("wrote {out}");
    Ok(())
}
