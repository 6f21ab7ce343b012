//! `rhm`: experiments on varying-tree random hierarchy grammars.

mod config;
mod experiments;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Settings;
use experiments::{execute, Kind};

#[derive(Parser)]
#[command(name = "rhm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a grammar (grammar.json).
    Gen(Settings),
    /// Sample a labelled dataset (dataset.tsv).
    Sample(Settings),
    /// Inside-parse sentences and report root posteriors (parse.csv).
    Parse(Settings),
    /// Mean normalized class entropy over f and L (entropy.csv).
    EntropySweep(Settings),
    /// Closed-form tables; no randomness.
    Analytics(Settings),
    /// Learn rules from data (learned.json, metrics.json).
    Learn(Settings),
    /// Held-out loss against training size, per v.
    LearningCurve(Settings),
    /// Empirical SNR of triple-conditioned root posteriors, per v.
    Snr(Settings),
}

fn main() -> ExitCode {
    let (kind, settings) = match Cli::parse().command {
        Command::Gen(s) => (Kind::Gen, s),
        Command::Sample(s) => (Kind::Sample, s),
        Command::Parse(s) => (Kind::Parse, s),
        Command::EntropySweep(s) => (Kind::EntropySweep, s),
        Command::Analytics(s) => (Kind::Analytics, s),
        Command::Learn(s) => (Kind::Learn, s),
        Command::LearningCurve(s) => (Kind::LearningCurve, s),
        Command::Snr(s) => (Kind::Snr, s),
    };
    match execute(kind, settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("rhm {}: {f}", kind.name());
            ExitCode::from(f.code())
        }
    }
}
