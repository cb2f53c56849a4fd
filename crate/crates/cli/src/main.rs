//! `hpmf`: synthetic data, training, prediction and evaluation from the
//! command line.
//!
//! Every command resolves its settings from built-in defaults, an optional
//! `--config` file of `key = value` lines, and flags (in that order), and
//! writes a `manifest.txt` that can be passed back as `--config` to repeat
//! the run. Exit status: 0 success, 1 usage or configuration error, 2 bad
//! input data, 3 numeric failure during training.

mod common;
mod config;
mod error;
mod evaluate;
mod predict;
mod synth;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "hpmf",
    version,
    about = "Hierarchical matrix factorization for sparse trait data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a taxonomy, trait data and true factors from the generative model.
    Synth(synth::SynthArgs),
    /// Fit a model and write its factors (or mean tables), statistics and trace.
    Train(train::TrainArgs),
    /// Predict cells from a trained model.
    Predict(predict::PredictArgs),
    /// Run an experiment: ablation, ab_split, correlation or scatter.
    Evaluate(evaluate::EvaluateArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Train(a) => train::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Evaluate(a) => evaluate::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hpmf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
