//! `prosody-mi`: extract word-level prosodic features, estimate how much
//! information text embeddings carry about them, and report the results.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! or training failure.

mod commands;
mod config;
mod exit;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use prosody_mi::dsp::Feature;
use prosody_mi::ContextType;

use crate::exit::{CliResult, ExitKind, Failure};

#[derive(Parser, Debug)]
#[command(
    name = "prosody-mi",
    version,
    about = "Mutual information between word-level prosody and text"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Pipeline configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract prosodic features into features.csv.
    Extract(Common),
    /// Estimate the mutual information between one feature and one context.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// energy, duration, pause, prominence, prominence_relative or f0.
        #[arg(long)]
        feature: Feature,
        /// current, past or bidirectional.
        #[arg(long)]
        context: ContextType,
    },
    /// Check both estimators against closed-form mixtures.
    Validate(Common),
    /// Collect every estimate into tables and charts.
    Report(Common),
    /// Write the synthetic corpus and a matching config.json.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(common: &Common) -> CliResult<config::Loaded> {
    Ok(config::load(&common.config, common.seed, common.out.as_deref())?)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Extract(common) => commands::extract(&load(&common)?),
        Command::Estimate {
            common,
            feature,
            context,
        } => commands::estimate(&load(&common)?, feature, context).map(drop),
        Command::Validate(common) => commands::validate(&load(&common)?).map(drop),
        Command::Report(common) => commands::report(&load(&common)?).map(drop),
        Command::Synth { out, seed } => commands::synth(&out, seed).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(ExitKind::Config as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { kind, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(kind as u8)
        }
    }
}
