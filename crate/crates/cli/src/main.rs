//! `flexload` command-line tool: train, evaluate, schedule and tabulate.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flexload::Objective;

use crate::config::AgentKind;

#[derive(Debug, Parser)]
#[command(name = "flexload", version, about = "Demand-response scheduling of household appliances")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent and write its checkpoint and learning curve.
    Train(TrainArgs),
    /// Evaluate a checkpoint or a baseline and write report tables.
    Eval(EvalArgs),
    /// Compute the best schedule of one day and write it as JSON.
    Oracle(OracleArgs),
    /// Merge table CSVs from several evaluations into one table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON). Built-in synthetic household when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Agent to train; overrides the config.
    #[arg(long, value_enum)]
    agent: Option<AgentKind>,
    /// Number of training episodes; overrides the agent config.
    #[arg(long)]
    episodes: Option<usize>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Trained network to evaluate.
    #[arg(long, conflicts_with = "baseline", required_unless_present = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Agent the checkpoint was trained with; inferred from its output head when absent.
    #[arg(long, value_enum)]
    agent: Option<AgentKind>,
    /// Evaluate a baseline instead of a checkpoint.
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,
    /// Smart-meter CSV with the days to evaluate; the config's evaluation days when absent.
    #[arg(long)]
    days: Option<PathBuf>,
    /// Threads evaluating days in parallel.
    #[arg(long, default_value_t = 1)]
    parallel_days: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Baseline {
    Unoptimized,
    Random,
    OraclePeak,
    OracleCost,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    common: Common,
    /// Smart-meter CSV holding the day to schedule.
    #[arg(long)]
    day: PathBuf,
    /// Date to pick from the CSV (YYYY-MM-DD); the first complete day when absent.
    #[arg(long)]
    date: Option<chrono::NaiveDate>,
    /// Quantity to minimize.
    #[arg(long, value_parser = parse_objective, default_value = "peak")]
    objective: Objective,
    /// Force the greedy valley-filling heuristic.
    #[arg(long)]
    greedy: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Table CSVs written by `eval`.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn parse_objective(s: &str) -> Result<Objective, String> {
    s.parse().map_err(|e: flexload::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
