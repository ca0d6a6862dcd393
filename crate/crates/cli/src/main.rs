//! tripcast: travel-time prediction pipeline. One binary, one config file,
//! subcommands from data generation through training to the short-vs-long
//! evaluation study.

mod commands;
mod config;
mod manifest;
mod model_io;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "tripcast", version, about = "Travel-time prediction on trip records")]
struct Cli {
    /// Configuration file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. --set synth.n_trips=1000. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Worker threads (overrides the config; 0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Run on one thread and zero wall-time columns in reports, so reruns
    /// are byte-identical.
    #[arg(long, global = true)]
    single_thread: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic city: road graph, weather and trip records.
    Synth,
    /// Parse, clean, join weather and assign zones.
    Ingest,
    /// Route every trip and assemble the feature matrix and statistics.
    Features,
    /// Train the configured model on the training window.
    Train,
    /// Step-wise grid search for the configured model.
    Tune,
    /// The long-term comparison: naive baseline plus five tree models.
    EvalLong,
    /// The short-term sweep: one boosted model per test hour and lookback.
    EvalShort,
    /// Compare the short-term sweep with a long-term model per test hour.
    Compare {
        /// Saved model file (defaults to the configured train model).
        #[arg(long)]
        model_file: Option<PathBuf>,
    },
    /// Batch prediction: O/D/time queries to predicted seconds.
    Predict {
        /// Saved model file (defaults to the configured train model).
        #[arg(long)]
        model_file: Option<PathBuf>,
        /// Query CSV with pickup_datetime and the four coordinates.
        #[arg(long)]
        input: PathBuf,
        /// Output CSV path.
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let config = RunConfig::load(cli.config.as_deref(), &cli.sets)?;

    let threads = if cli.single_thread { 1 } else { cli.threads.unwrap_or(config.threads) };
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }

    let ctx = commands::Ctx::new(config, cli.single_thread);
    match cli.command {
        Command::Synth => commands::synth(&ctx),
        Command::Ingest => commands::ingest(&ctx),
        Command::Features => commands::features(&ctx),
        Command::Train => commands::train(&ctx),
        Command::Tune => commands::tune(&ctx),
        Command::EvalLong => commands::eval_long(&ctx),
        Command::EvalShort => commands::eval_short(&ctx),
        Command::Compare { model_file } => commands::compare(&ctx, model_file),
        Command::Predict { model_file, input, output } => {
            commands::predict(&ctx, model_file, &input, &output)
        }
    }
}
