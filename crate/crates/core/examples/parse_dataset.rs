//! Parse one of the public datasets from disk and summarise it.
//!
//!     cargo run --release --example parse_dataset -- pamap2 /data/PAMAP2_Dataset
//!
//! The root may also come from INVAR_HAR_DATA_ROOT.

use std::collections::BTreeMap;
use std::path::PathBuf;

use invar_har::config::DATA_ROOT_ENV;
use invar_har::data::{load_dataset, DatasetName, DatasetSpec, Scenario};
use invar_har::segmentation::segment_all;

fn main() -> invar_har::Result<()> {
    let mut args = std::env::args().skip(1);
    let name: DatasetName = args.next().unwrap_or_else(|| "pamap2".into()).parse()?;
    let Some(root) = args.next().map(PathBuf::from).or_else(|| std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from)) else {
        eprintln!("usage: parse_dataset <pamap2|mhealth|realdisp> <root>  (or set {DATA_ROOT_ENV})");
        std::process::exit(2);
    };
    let spec = DatasetSpec::default_for(name);
    let recordings = load_dataset(&root, &spec, Scenario::default())?;
    let windows = segment_all(&recordings, &spec);
    println!("{}: {} recordings, {} windows of {}", name.as_str(), recordings.len(), windows.len(), spec.window_size);
    let mut per_subject: BTreeMap<u32, usize> = BTreeMap::new();
    for w in &windows {
        *per_subject.entry(w.s).or_default() += 1;
    }
    for (s, n) in per_subject {
        println!("  subject {s}: {n}");
    }
    Ok(())
}
