//! Command-line front end for the double feature allocation recommender.
//!
//! Settings come from a flat `key=value` file (`--config`), then the
//! `DFA_SEED` environment variable for the seed, then command-line flags.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod manifest;

use clap::{Args, Parser, Subcommand};
use config::Config;
use error::CliError;
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "dfa", version, about = "Double feature allocation recommender")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides DFA_SEED and the config file)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Ratings CSV (user,item,rating)
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    /// Directory written by train or train-cmc
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Extra settings, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its truth
    Simulate(Common),
    /// Run one chain on the training split
    Train(Common),
    /// Run one chain per user shard and merge the item effects
    TrainCmc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        shards: Option<usize>,
        /// Worker threads for shard chains
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Posterior predictive ratings for held-out or queried pairs
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Accuracy report for predictions against truth
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// MAP feature count and Dahl point estimate
    Summarize {
        #[command(flatten)]
        common: Common,
        /// Truth file from simulate, for recovery metrics
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Matrix factorization baseline
    Mf(Common),
    /// Cost and standard-error table for shard counts
    Tradeoff(Common),
}

fn path_str(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

fn build_config(common: &Common, extra: &[(&str, Option<String>)]) -> Result<Config, CliError> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Ok(seed) = std::env::var("DFA_SEED") {
        let seed = seed.trim();
        seed.parse::<u64>().map_err(|_| CliError::Usage(format!("DFA_SEED must be an integer, got {seed:?}")))?;
        cfg.set("seed", seed)?;
    }
    let mut flags = Config::default();
    for kv in &common.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        flags.set(k.trim(), v.trim())?;
    }
    let named = [
        ("out", common.out.as_deref().map(path_str)),
        ("seed", common.seed.map(|s| s.to_string())),
        ("data", common.data.as_deref().map(path_str)),
        ("model", common.model.as_deref().map(path_str)),
    ];
    for (k, v) in named.iter().chain(extra) {
        if let Some(v) = v {
            flags.set(k, v)?;
        }
    }
    cfg.overlay(&flags);
    Ok(cfg)
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => commands::simulate(build_config(&c, &[])?),
        Command::Train(c) => commands::train(build_config(&c, &[])?),
        Command::TrainCmc { common, shards, jobs } => {
            let mut cfg = build_config(&common, &[("shards", shards.map(|s| s.to_string()))])?;
            if let Some(j) = jobs {
                cfg.set("jobs", &j.to_string())?;
            }
            let jobs = cfg.get::<usize>("jobs")?;
            if jobs == Some(0) {
                return Err(CliError::Usage("jobs must be at least 1".into()));
            }
            commands::train_cmc(cfg, jobs)
        }
        Command::Predict { common, queries } => {
            commands::predict(build_config(&common, &[("queries", queries.as_deref().map(path_str))])?)
        }
        Command::Eval { common, predictions, truth } => commands::eval(build_config(
            &common,
            &[("predictions", predictions.as_deref().map(path_str)), ("truth", truth.as_deref().map(path_str))],
        )?),
        Command::Summarize { common, truth } => {
            commands::summarize(build_config(&common, &[("truth", truth.as_deref().map(path_str))])?)
        }
        Command::Mf(c) => commands::mf(build_config(&c, &[])?),
        Command::Tradeoff(c) => commands::tradeoff(build_config(&c, &[])?),
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("dfa: {e}");
            e.exit_code()
        }
    }
}
