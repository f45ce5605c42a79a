//! Command-line entry point for the emotional-support dialogue pipeline:
//! simulate a reward dataset, train the featurized scorer, run the policy
//! optimization demo, and evaluate/report on interactive episodes.

mod commands;
mod config;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::RunContext;

#[derive(Parser)]
#[command(name = "escsim", version, about = "Emotional-support dialogue simulation pipeline")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base RNG seed for the run.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Run directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "runs/latest")]
    out: PathBuf,
    /// Worker threads for data-parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overwrite a completed run directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a reward dataset by rolling out candidate responses.
    Simulate,
    /// Fit the featurized response scorer on labeled pairs.
    TrainReward,
    /// Run the group-relative policy optimization demo on the toy policy.
    GrpoTrain,
    /// Run interactive evaluation episodes and compute SR/AT.
    Evaluate,
    /// Recompute success rates over a threshold grid from saved episodes.
    Sweep {
        /// episodes.jsonl produced by `evaluate`.
        #[arg(long)]
        episodes: PathBuf,
    },
    /// Summarize saved episodes with a per-category breakdown.
    Report {
        /// episodes.jsonl produced by `evaluate`.
        #[arg(long)]
        episodes: PathBuf,
        /// Category key: "emotion" or "problem".
        #[arg(long, default_value = "emotion")]
        by: String,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();

    let (config, config_dir) = match &cli.config {
        Some(path) => {
            let dir = path
                .parent()
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("."));
            (config::load_config(path)?, dir)
        }
        None => (config::RunConfig::default(), PathBuf::from(".")),
    };

    let run = RunContext {
        config,
        config_dir,
        out_dir: cli.out.clone(),
        seed: cli.seed,
        workers: cli.workers,
        force: cli.force,
    };

    match &cli.command {
        Command::Simulate => commands::simulate(&run),
        Command::TrainReward => commands::train_reward(&run),
        Command::GrpoTrain => commands::grpo_train(&run),
        Command::Evaluate => commands::evaluate(&run),
        Command::Sweep { episodes } => commands::sweep(&run, episodes),
        Command::Report { episodes, by } => commands::report(&run, episodes, by),
    }
}
