use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use invar_har::cli;
use invar_har::config::{ExperimentConfig, WeightName};
use invar_har::data::DatasetName;
use invar_har::trainer::AblationMode;
use invar_har::{Error, Result};

/// Subject-invariant activity recognition experiments.
///
/// The dataset root can also be given with INVAR_HAR_DATA_ROOT.
#[derive(Parser)]
#[command(name = "invar-har", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML experiment file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// pamap2, mhealth, realdisp or synthetic
    #[arg(long, global = true)]
    dataset: Option<DatasetName>,
    /// Comma-separated ablation modes, or `all`
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Comma-separated seeds
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Canonical record order, so reruns compare byte for byte
    #[arg(long, global = true)]
    deterministic: bool,
    /// Parallel fold jobs
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, segment and cache a dataset
    Prepare,
    /// Leave-one-subject-out evaluation for the configured modes
    Loso,
    /// Compare the three discriminator variants
    DiscCompare,
    /// Latent distribution shift before and after adversarial training
    Shift,
    /// Sweep one loss weight
    Sweep {
        /// w_a, w_r or w_c (defaults to the config file's sweep section)
        #[arg(long)]
        which: Option<WeightName>,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Re-render charts from the summaries in the output directory
    Plot,
}

fn parse_modes(s: &str) -> Result<Vec<AblationMode>> {
    if s == "all" {
        return Ok(AblationMode::ALL.to_vec());
    }
    s.split(',').map(|m| m.trim().parse()).collect()
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, common.dataset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::for_dataset(name),
        (None, None) => return Err(Error::Config("give --config or --dataset".into())),
    };
    if let Some(name) = common.dataset {
        if name != cfg.dataset.name {
            return Err(Error::Config(format!(
                "--dataset {} conflicts with the config file's {}",
                name.as_str(),
                cfg.dataset.name.as_str()
            )));
        }
    }
    if let Some(m) = &common.mode {
        cfg.modes = parse_modes(m)?;
    }
    if let Some(seeds) = &common.seeds {
        cfg.train.seeds = seeds.clone();
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if common.deterministic {
        cfg.deterministic = true;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    cfg.apply_env();
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Command::Plot = cli.command {
        let dir = cli.common.out.clone().map_or_else(|| resolve(&cli.common).map(|c| c.out_dir), Ok)?;
        for p in cli::cmd_plot(&dir)? {
            println!("{}", p.display());
        }
        return Ok(());
    }
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::Prepare => {
            let (data, status) = cli::cmd_prepare(&cfg)?;
            println!(
                "{}: {} windows from {} subjects ({status:?})",
                data.spec.name,
                data.windows.len(),
                data.subjects().len()
            );
        }
        Command::Loso => {
            cli::cmd_loso(&cfg)?;
        }
        Command::DiscCompare => {
            cli::cmd_disc_compare(&cfg)?;
        }
        Command::Shift => {
            cli::cmd_shift(&cfg)?;
        }
        Command::Sweep { which, values } => {
            let which = which.unwrap_or(cfg.sweep.which);
            let values = values.unwrap_or_else(|| cfg.sweep.values.clone());
            cli::cmd_weight_sweep(&cfg, which, &values)?;
        }
        Command::Plot => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
