//! Command-line orchestration of the identification benchmark.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{Family, RunConfig, RunDir};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "poolid", version, about = "Pool thermal-process identification benchmark")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "POOLID_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "POOLID_SEED")]
    pub seed: Option<u64>,
    /// Parent directory of run directories.
    #[arg(long, global = true, env = "POOLID_OUT")]
    pub out: Option<PathBuf>,
    /// Run directory name; a UTC timestamp when omitted.
    #[arg(long, global = true, env = "POOLID_RUN_ID")]
    pub run_id: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic benchmark year.
    Simulate,
    /// Clean, resample and split raw data into a bundle.
    Prepare,
    /// Fit a model on the prepared bundle.
    Train {
        #[arg(long, value_enum)]
        family: Option<Family>,
    },
    /// Score models on the test and scenario sections.
    Eval {
        /// Model files; defaults to every model of the run.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
    },
    /// Cross-validated hyperparameter search.
    Hyperopt {
        #[arg(long, value_enum)]
        family: Option<Family>,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Print the comparison table of an evaluated run.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Prepare => "prepare",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Hyperopt { .. } => "hyperopt",
            Command::Report => "report",
        }
    }
}

/// Config file (or defaults) with command-line overrides applied and the
/// run id fixed.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(o) = &cli.out {
        cfg.paths.out_dir = Some(o.clone());
    }
    if cli.run_id.is_some() {
        cfg.run_id = cli.run_id.clone();
    }
    if cfg.run_id.is_none() {
        cfg.run_id = Some(chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Executes one command; returns the text to print.
pub fn run(cli: &Cli) -> Result<String> {
    let cfg = resolve_config(cli)?;
    let dir = RunDir::resolve(&cfg);
    std::fs::create_dir_all(&dir.root)?;
    std::fs::write(dir.root.join(format!("{}.config.toml", cli.command.name())), cfg.to_toml())?;
    let msg = match &cli.command {
        Command::Simulate => {
            let files = commands::simulate(&cfg, &dir)?;
            format!("wrote {} files to {}", files.len(), dir.data.display())
        }
        Command::Prepare => {
            let p = commands::prepare(&cfg, &dir)?;
            let s = &p.split;
            format!(
                "bundle {}: {} train, {} validation, {} test, {} scenario sections",
                dir.bundle.display(),
                s.train.len(),
                s.validation.len(),
                s.test.len(),
                s.scenario.len()
            )
        }
        Command::Train { family } => {
            let p = commands::train(&cfg, &dir, family.unwrap_or(cfg.model.family))?;
            format!("model written to {}", p.display())
        }
        Command::Eval { models } => {
            let r = commands::eval(&cfg, &dir, models)?;
            let rows: Vec<String> = r
                .models
                .iter()
                .map(|(l, m)| format!("{l}: full {:.4}, short {:.4}, long {:.4}", m.criteria.full, m.criteria.short, m.criteria.long))
                .collect();
            format!("{}\nreports in {}", rows.join("\n"), dir.reports.display())
        }
        Command::Hyperopt { family, budget } => {
            let f = family.unwrap_or(cfg.model.family);
            let o = commands::hyperopt(&cfg, &dir, f, *budget)?;
            format!(
                "{} trials; best trial {} with mean validation acc {:.5}: {}",
                o.trials.len(),
                o.best.trial_id,
                o.best.mean_score,
                o.best.config.key()
            )
        }
        Command::Report => commands::report(&dir)?,
    };
    Ok(msg)
}
