//! Sweep the adversarial weight through the command layer, which also writes
//! records, a JSON summary and an SVG chart.
//!
//!     cargo run --release --example weight_sweep -- [out_dir]

use std::path::PathBuf;

use invar_har::cli::cmd_weight_sweep;
use invar_har::config::WeightName;
use invar_har::presets::smoke_synthetic;

fn main() -> invar_har::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("invar_har_sweep"), PathBuf::from);
    let cfg = smoke_synthetic().experiment_config(&out);
    let res = cmd_weight_sweep(&cfg, WeightName::WA, &[0.0, 0.3])?;
    for p in &res.points {
        let tag = if p.value == res.default_value { " (default)" } else { "" };
        println!("w_a = {}{tag}: F1 {}", p.value, p.aggregate.macro_f1);
    }
    println!("written to {}", out.display());
    Ok(())
}
