//! `replay`: generate synthetic corpora, train, evaluate and analyze.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use replay_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "replay",
    version,
    about = "Next-location prediction with smoothed timestamp embeddings"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic check-in corpus and its statistics.
    Generate(GenerateArgs),
    /// Train a model and write checkpoints plus a per-epoch loss log.
    Train(RunArgs),
    /// Score a checkpoint and write metrics, per-timestamp and bandwidth tables.
    Evaluate(RunArgs),
    /// Returning-probability histogram and corpus statistics of a check-in file.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// TOML generator spec; every key is optional.
    #[arg(long = "config", alias = "spec")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// Flags shared by `train` and `evaluate`; they override the config file.
#[derive(Debug, Args, Clone, Default)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// replay, noste, noqt, multig, fixedb or flashback.
    #[arg(long)]
    variant: Option<String>,
    /// vanilla, lstm or gru.
    #[arg(long)]
    cell: Option<String>,
    /// day, weekday_weekend or week.
    #[arg(long)]
    time_scale: Option<String>,
    /// hour or minute.
    #[arg(long)]
    time_granularity: Option<String>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Check-in file, overriding `data.path`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// `train`: continue from this checkpoint. `evaluate`: the checkpoint to
    /// score (default `<out>/checkpoint.bin`).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// `evaluate` only: score the training check-ins instead of the test ones.
    #[arg(long)]
    train_split: bool,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    bin_width_hours: f64,
    #[arg(long, default_value_t = 168.0)]
    max_lag_hours: f64,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(e) if e.is_numerical() => 3,
        Some(e) if e.is_data() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Train(a) => commands::train(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Analyze(a) => commands::analyze(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
