//! Experiment commands behind the binary. Every command writes its resolved
//! configuration into the output directory next to its results.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cache::{load_or_build, CacheStatus, PreparedDataset};
use crate::config::{hex, ExperimentConfig, WeightName};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate, loso_jobs, run_jobs, AggregateReport, DiscriminatorRow, FoldResult, LosoConfig};
use crate::model::DiscriminatorKind;
use crate::plot::{line_chart, signed_bar_chart};
use crate::records::{canonicalize, completed_jobs, read_records, RecordWriter, RunRecord};
use crate::shift::{shift_delta, ShiftReport};
use crate::trainer::AblationMode;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const TIMINGS_FILE: &str = "timings.jsonl";

fn write_resolved(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.resolved.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// Parse or generate, segment and cache the configured dataset.
pub fn cmd_prepare(cfg: &ExperimentConfig) -> Result<(PreparedDataset, CacheStatus)> {
    cfg.validate()?;
    write_resolved(cfg)?;
    let (data, status) = load_or_build(&cfg.out_dir.join("cache"), cfg)?;
    log::info!(
        "{}: {} windows, {} subjects, {} classes ({status:?})",
        data.spec.name,
        data.windows.len(),
        data.subjects().len(),
        data.classes()
    );
    Ok((data, status))
}

/// Results of one LOSO experiment, including those recovered from earlier
/// (interrupted) runs.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub results: Vec<FoldResult>,
    pub aggregates: Vec<AggregateReport>,
    /// Jobs skipped because their records already existed.
    pub resumed_jobs: usize,
}

fn run_hash(cfg: &ExperimentConfig, loso: &LosoConfig) -> String {
    let mut l = loso.clone();
    l.checkpoint_dir = None;
    let ident = serde_json::json!({ "experiment": cfg.result_hash(), "loso": l });
    hex(&Sha256::digest(ident.to_string().as_bytes()))
}

#[derive(Serialize)]
struct Timing<'a> {
    experiment: &'a str,
    test_subject: u32,
    seed: u64,
    mode: AblationMode,
    discriminator: DiscriminatorKind,
    wall_s: f64,
}

/// Run (or resume) LOSO for `modes`, appending one record per fold × seed ×
/// mode. Any failed job makes the whole call fail after the others finish.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: &PreparedDataset,
    experiment: &str,
    loso: &LosoConfig,
    modes: &[AblationMode],
) -> Result<ExperimentOutcome> {
    let hash = run_hash(cfg, loso);
    let path = cfg.out_dir.join(RECORDS_FILE);
    let existing = read_records(&path)?;
    let kind = loso.train.discriminator;
    let done = completed_jobs(&existing, experiment, &hash, kind, modes);
    let jobs: Vec<_> = loso_jobs(&data.subjects(), loso)?
        .into_iter()
        .filter(|j| !done.contains(&(j.fold.test_subject, j.seed)))
        .collect();
    // a job rerun after a partial earlier run leaves duplicates; keep the last
    let mut results: Vec<FoldResult> = existing
        .into_iter()
        .filter(|r| r.experiment == experiment && r.config_hash == hash && r.result.discriminator == kind)
        .filter(|r| done.contains(&(r.result.fold.test_subject, r.result.seed)) && modes.contains(&r.result.mode))
        .map(|r| (r.result.key(), r.result))
        .collect::<std::collections::BTreeMap<_, _>>()
        .into_values()
        .collect();
    let resumed_jobs = done.len();
    if resumed_jobs > 0 {
        log::info!("{experiment}: {resumed_jobs} jobs already recorded, {} to run", jobs.len());
    }
    let writer = RecordWriter::open(&path)?;
    let timings = RecordWriter::open(&cfg.out_dir.join(TIMINGS_FILE))?;
    let dataset = data.spec.name.as_str();
    let on_done = |rs: &[FoldResult]| -> Result<()> {
        for r in rs {
            writer.append(&RunRecord::new(experiment, dataset, &hash, r.clone()))?;
            let t = Timing {
                experiment,
                test_subject: r.fold.test_subject,
                seed: r.seed,
                mode: r.mode,
                discriminator: r.discriminator,
                wall_s: r.history.wall_s(),
            };
            timings.append(&t)?;
        }
        Ok(())
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let fresh = pool.install(|| run_jobs(&data.windows, data.classes(), &jobs, loso, modes, &on_done));
    if cfg.deterministic {
        canonicalize(&path)?;
    }
    results.extend(fresh?);
    results.sort_by_key(|r| r.key());
    let aggregates = modes
        .iter()
        .map(|&m| aggregate(&results, m, kind))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome { results, aggregates, resumed_jobs })
}

/// Markdown table in "mean ± std" layout.
pub fn format_table(title: &str, rows: &[(String, &AggregateReport)]) -> String {
    let mut s = format!("### {title}\n\n| | Accuracy | F1-Score_M |\n|---|---|---|\n");
    for (name, agg) in rows {
        s.push_str(&format!("| {name} | {} | {} |\n", agg.accuracy, agg.macro_f1));
    }
    if let Some((_, a)) = rows.first() {
        s.push_str(&format!("\nstd: {}\n", a.std_convention));
    }
    s
}

fn load(cfg: &ExperimentConfig) -> Result<PreparedDataset> {
    Ok(cmd_prepare(cfg)?.0)
}

/// LOSO for every configured mode; one table per mode.
pub fn cmd_loso(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let data = load(cfg)?;
    let out = run_experiment(cfg, &data, "loso", &cfg.loso_config(), &cfg.modes)?;
    let mut text = String::new();
    for agg in &out.aggregates {
        text.push_str(&format_table(
            &format!("{} / {} ({})", data.spec.name, agg.mode, agg.discriminator.label()),
            &[(agg.mode.to_string(), agg)],
        ));
        text.push('\n');
    }
    fs::write(cfg.out_dir.join("loso.md"), &text)?;
    write_json(&cfg.out_dir.join("loso_aggregates.json"), &out.aggregates)?;
    print!("{text}");
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscComparison {
    pub dataset: String,
    pub rows: Vec<DiscriminatorRow>,
}

/// Full-mode LOSO once per discriminator, everything else fixed.
pub fn cmd_disc_compare(cfg: &ExperimentConfig) -> Result<DiscComparison> {
    let data = load(cfg)?;
    let mut rows = Vec::new();
    for kind in DiscriminatorKind::ALL {
        let mut loso = cfg.loso_config();
        loso.train.discriminator = kind;
        let out = run_experiment(cfg, &data, "disc-compare", &loso, &[AblationMode::Full])?;
        rows.push(DiscriminatorRow {
            discriminator: kind,
            label: kind.label().into(),
            encoder_hash: out.results[0].encoder_hash.clone(),
            aggregate: out.aggregates[0].clone(),
        });
    }
    if rows.iter().any(|r| r.encoder_hash != rows[0].encoder_hash) {
        return Err(Error::InvalidArgument("discriminator variants do not share F/R/C".into()));
    }
    let cmp = DiscComparison { dataset: data.spec.name.to_string(), rows };
    let table = format_table(
        &format!("{}: discrimination tasks", cmp.dataset),
        &cmp.rows.iter().map(|r| (r.label.clone(), &r.aggregate)).collect::<Vec<_>>(),
    );
    fs::write(cfg.out_dir.join("disc_compare.md"), &table)?;
    write_json(&cfg.out_dir.join("disc_compare.json"), &cmp)?;
    print!("{table}");
    Ok(cmp)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetShift {
    pub dataset: String,
    pub activity_labels: Vec<i64>,
    pub report: ShiftReport,
}

/// Step-2 versus step-3 latent shift from full-mode LOSO (records of an
/// earlier `loso` run with the same settings are reused).
pub fn cmd_shift(cfg: &ExperimentConfig) -> Result<DatasetShift> {
    let data = load(cfg)?;
    let out = run_experiment(cfg, &data, "loso", &cfg.loso_config(), &[AblationMode::Full])?;
    let (s2, s3): (Vec<_>, Vec<_>) = out
        .results
        .iter()
        .filter_map(|r| r.shift.as_ref())
        .map(|s| (s.step2.clone(), s.step3.clone()))
        .unzip();
    let shift = DatasetShift {
        dataset: data.spec.name.to_string(),
        activity_labels: data.spec.activity_labels.clone(),
        report: shift_delta(&s2, &s3)?,
    };
    write_json(&cfg.out_dir.join(format!("shift_{}.json", shift.dataset)), &shift)?;
    cmd_plot(&cfg.out_dir)?;
    println!(
        "{}: overall W1 {:.4} -> {:.4} ({:+.1}%), reduced in {}/{} runs",
        shift.dataset,
        shift.report.overall_step2,
        shift.report.overall_step3,
        shift.report.overall_change_pct.unwrap_or(f64::NAN),
        shift.report.folds_reduced,
        shift.report.n_folds
    );
    Ok(shift)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub dataset: String,
    pub which: WeightName,
    pub default_value: f64,
    pub points: Vec<SweepPoint>,
}

/// Sweep one loss weight with the other two at their configured values. The
/// configured value of the swept weight is always included.
pub fn cmd_weight_sweep(cfg: &ExperimentConfig, which: WeightName, values: &[f64]) -> Result<SweepResult> {
    let data = load(cfg)?;
    let base = cfg.train.weights;
    let default_value = match which {
        WeightName::WA => base.w_a,
        WeightName::WR => base.w_r,
        WeightName::WC => base.w_c,
    };
    let mut grid = values.to_vec();
    if !grid.contains(&default_value) {
        grid.push(default_value);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut points = Vec::with_capacity(grid.len());
    for &v in &grid {
        let mut loso = cfg.loso_config();
        match which {
            WeightName::WA => loso.train.weights.w_a = v,
            WeightName::WR => loso.train.weights.w_r = v,
            WeightName::WC => loso.train.weights.w_c = v,
        }
        loso.train.weights.validate()?;
        let tag = format!("sweep:{}={v}", which.as_str());
        let out = run_experiment(cfg, &data, &tag, &loso, &[AblationMode::Full])?;
        println!("{} = {v}: acc {}  f1 {}", which.as_str(), out.aggregates[0].accuracy, out.aggregates[0].macro_f1);
        points.push(SweepPoint { value: v, aggregate: out.aggregates[0].clone() });
    }
    let res = SweepResult { dataset: data.spec.name.to_string(), which, default_value, points };
    write_json(&cfg.out_dir.join(format!("sweep_{}.json", which.as_str())), &res)?;
    cmd_plot(&cfg.out_dir)?;
    Ok(res)
}

fn json_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if dir.is_dir() {
        for e in fs::read_dir(dir)? {
            let p = e?.path();
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with(prefix) && name.ends_with(".json") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Re-render every chart from the JSON summaries in `out_dir`. Returns the
/// files written.
pub fn cmd_plot(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let mut overall_labels = Vec::new();
    let mut overall_values = Vec::new();
    for p in json_files(out_dir, "shift_")? {
        let s: DatasetShift = serde_json::from_str(&fs::read_to_string(&p)?)?;
        if let Some(v) = s.report.overall_change_pct {
            overall_labels.push(s.dataset.clone());
            overall_values.push(v);
        }
        let (labels, values): (Vec<String>, Vec<f64>) = s
            .activity_labels
            .iter()
            .zip(&s.report.per_activity_change_pct)
            .filter_map(|(l, v)| v.map(|v| (format!("label {l}"), v)))
            .unzip();
        let svg = signed_bar_chart(
            &format!("{}: change in Wasserstein distance, step 2 to step 3", s.dataset),
            "reduction (%)",
            &labels,
            &values,
        );
        let path = out_dir.join(format!("shift_{}_activities.svg", s.dataset));
        fs::write(&path, svg)?;
        written.push(path);
    }
    if !overall_values.is_empty() {
        let path = out_dir.join("shift_overall.svg");
        fs::write(
            &path,
            signed_bar_chart("Change in Wasserstein distance per dataset", "reduction (%)", &overall_labels, &overall_values),
        )?;
        written.push(path);
    }
    for p in json_files(out_dir, "sweep_")? {
        let s: SweepResult = serde_json::from_str(&fs::read_to_string(&p)?)?;
        let xs: Vec<f64> = s.points.iter().map(|p| p.value).collect();
        let series = vec![
            ("accuracy".to_string(), s.points.iter().map(|p| p.aggregate.accuracy.mean).collect()),
            ("F1-Score_M".to_string(), s.points.iter().map(|p| p.aggregate.macro_f1.mean).collect()),
        ];
        let path = out_dir.join(format!("sweep_{}.svg", s.which.as_str()));
        fs::write(&path, line_chart(&format!("{}: sweep of {}", s.dataset, s.which.as_str()), s.which.as_str(), "score", &xs, &series))?;
        written.push(path);
    }
    Ok(written)
}
