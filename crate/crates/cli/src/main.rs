//! apiselect: train, sweep, and replay budget strategies over recorded
//! prediction service logs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use apiselect::metrics::Metric;
use apiselect::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "apiselect",
    version,
    about = "Budget-aware selection across multi-label prediction services"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a budget strategy from a recorded prediction log
    Train(TrainArgs),
    /// Emit an accuracy/cost trade-off table across budgets
    Sweep(SweepArgs),
    /// Replay a trained strategy over a stream of records
    Replay(ReplayArgs),
    /// Generate a synthetic record log and cost table
    Synth(SynthArgs),
}

/// Inputs shared by the commands that read a dataset.
#[derive(Args)]
struct DataArgs {
    /// Recorded predictions, one JSON object per line
    #[arg(long)]
    records: PathBuf,
    /// Service price list (JSON)
    #[arg(long)]
    costs: PathBuf,
    /// Label embeddings (JSONL) for unbounded label spaces
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Base service name; defaults to the cost file's base entry
    #[arg(long)]
    base: Option<String>,
    /// Label-set metric: jaccard, f1, or precision
    #[arg(long, default_value = "jaccard")]
    metric: Metric,
    /// Seed for the split and model fitting
    #[arg(long, env = "FRUGAL_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Per-query budget, base call included
    #[arg(long)]
    budget: f64,
    /// Search candidate base services instead of fixing one. Optional
    /// comma-separated names; default is every service priced within budget
    #[arg(long, num_args = 0..=1, default_missing_value = "")]
    base_search: Option<String>,
    /// Strategy output path; the predictor is written alongside
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated budget list
    #[arg(long)]
    budgets: String,
    /// Add rows for the constant-mean-predictor ablation
    #[arg(long)]
    with_dap: bool,
    /// Add majority and weighted majority vote rows
    #[arg(long)]
    with_baselines: bool,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Strategy JSON produced by `train`
    #[arg(long)]
    strategy: PathBuf,
    /// Records to stream
    #[arg(long)]
    records: PathBuf,
    /// Label embeddings (JSONL) for unbounded label spaces
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Label-set metric: jaccard, f1, or precision
    #[arg(long, default_value = "jaccard")]
    metric: Metric,
    /// Assignment log CSV path; the summary goes to stdout
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// Number of records to generate
    #[arg(long, default_value_t = 400)]
    n_records: usize,
    /// Number of services; the first is the free base
    #[arg(long, default_value_t = 4)]
    n_apis: usize,
    /// Vocabulary size
    #[arg(long, default_value_t = 8)]
    n_labels: usize,
    /// Generator seed
    #[arg(long, env = "FRUGAL_SEED", default_value_t = 7)]
    seed: u64,
    /// Records output path (JSONL)
    #[arg(long)]
    out_records: PathBuf,
    /// Cost table output path (JSON)
    #[arg(long)]
    out_costs: PathBuf,
    /// Optional label embeddings output (JSONL)
    #[arg(long)]
    out_embeddings: Option<PathBuf>,
    /// Embedding dimension when --out-embeddings is given
    #[arg(long, default_value_t = 6)]
    dim: usize,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version go to stdout and exit clean; anything else is
            // a runtime error, never the "infeasible" code
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Sweep(args) => commands::sweep(args),
        Command::Replay(args) => commands::replay(args),
        Command::Synth(args) => commands::synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::Infeasible(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
