use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use invar_har::presets::smoke_synthetic;
use invar_har::records::read_records;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_invar-har"));
    c.env_remove("INVAR_HAR_DATA_ROOT").env("RUST_LOG", "warn");
    c
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{:?} failed:\n{}",
        cmd,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let cfg = smoke_synthetic().experiment_config(&dir.join("out"));
    let path = dir.join("smoke.toml");
    fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

#[test]
fn every_subcommand_runs_on_the_smoke_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("out");
    let c = cfg.to_str().unwrap();

    let o = run(bin().args(["--config", c, "prepare"]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("windows from 4 subjects"));
    assert!(out.join("config.resolved.toml").exists());

    run(bin().args(["--config", c, "--mode", "through_step2,full", "--deterministic", "loso"]));
    let recs = read_records(&out.join("records.jsonl")).unwrap();
    // 4 folds x 1 seed x 2 modes
    assert_eq!(recs.len(), 8);
    assert!(fs::read_to_string(out.join("loso.md")).unwrap().contains("± "));
    assert!(fs::read_dir(out.join("checkpoints")).unwrap().count() >= 8);

    // rerunning resumes instead of retraining
    run(bin().args(["--config", c, "--mode", "through_step2,full", "--deterministic", "loso"]));
    assert_eq!(read_records(&out.join("records.jsonl")).unwrap().len(), 8);

    run(bin().args(["--config", c, "shift"]));
    assert_eq!(read_records(&out.join("records.jsonl")).unwrap().len(), 8);
    assert!(out.join("shift_synthetic.json").exists());
    assert!(out.join("shift_synthetic_activities.svg").exists());

    run(bin().args(["--config", c, "sweep", "--which", "w_a", "--values", "0"]));
    let sweep: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("sweep_w_a.json")).unwrap()).unwrap();
    assert_eq!(sweep["points"].as_array().unwrap().len(), 2);

    run(bin().args(["--config", c, "disc-compare"]));
    let cmp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("disc_compare.json")).unwrap()).unwrap();
    assert_eq!(cmp["rows"].as_array().unwrap().len(), 3);

    fs::remove_file(out.join("sweep_w_a.svg")).unwrap();
    let o = run(bin().args(["--out", out.to_str().unwrap(), "plot"]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("sweep_w_a.svg"));
    assert!(out.join("sweep_w_a.svg").exists());
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[dataset]\nname = \"synthetic\"\nbogus = 1\n").unwrap();
    let o = bin().args(["--config", bad.to_str().unwrap(), "prepare"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = bin().args(["--dataset", "pamap2", "--out", dir.path().to_str().unwrap(), "prepare"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("INVAR_HAR_DATA_ROOT"));

    let missing = dir.path().join("no_such_dir");
    let o = bin()
        .env("INVAR_HAR_DATA_ROOT", &missing)
        .args(["--dataset", "mhealth", "--out", dir.path().to_str().unwrap(), "prepare"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_dir"));

    let o = bin().args(["--dataset", "synthetic", "--mode", "bogus", "loso"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}
