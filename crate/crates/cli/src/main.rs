//! `finagent`: ingest data, tune strategies, run backtests, compare runs and
//! manage the model response cache.

mod backtest;
mod error;
mod ingest;
mod replay;
mod report;
mod tune;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

pub use error::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "finagent",
    version,
    about = "Multimodal LLM trading agent and baselines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Log filter, e.g. `info` or `finagent_core=debug`.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,

    /// Seed for the tuner's subsampling and the memory embedder.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Print one JSON object on stdout instead of text.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate source files and write a normalized dataset bundle
    Ingest(ingest::Args),
    /// Run the agent or a rule-based baseline over a date range
    Backtest(Box<backtest::Args>),
    /// Grid-search strategy parameters on a training range
    Tune(tune::Args),
    /// Compare runs in a metrics table and an equity chart
    Report(report::Args),
    /// Inspect or prune a response cache
    Replay(replay::Args),
}

/// What a command prints: text for people and JSON for scripts.
pub struct Outcome {
    pub text: String,
    pub json: Value,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    let command_line: Vec<String> = std::env::args().collect();
    let result = match cli.command {
        Command::Ingest(a) => ingest::run(&a),
        Command::Backtest(a) => backtest::run(&a, cli.seed, command_line),
        Command::Tune(a) => tune::run(&a, cli.seed),
        Command::Report(a) => report::run(&a),
        Command::Replay(a) => replay::run(&a),
    };
    match result {
        Ok(out) => {
            if cli.json {
                println!("{}", out.json);
            } else {
                print!("{}", out.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::json!({"error": e.to_string(), "exit_code": e.code()})
                );
            }
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
