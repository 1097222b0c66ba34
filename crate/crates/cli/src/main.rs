//! `wordshap`: segment utterances into word players, attribute them against
//! an external evaluator and compare attribution concentration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::commands::{attribute, diagnose, emm_write, segment, synth};
use crate::config::FileConfig;

#[derive(Parser)]
#[command(name = "wordshap", version, about = "Word-level Shapley attribution for speech inputs")]
struct Cli {
    /// Flat `key = value` configuration file; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// More log output on stderr (-v debug, -vv trace). RUST_LOG overrides.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Align transcripts, refine boundaries and write one segmentation per sample.
    Segment(segment::SegmentArgs),
    /// Estimate word Shapley values for every segmented sample.
    Attribute(attribute::AttributeArgs),
    /// Compare two result directories paired by sample id.
    Diagnose(diagnose::DiagnoseArgs),
    /// Convert a tab-separated table of emission rows to an EMM1 file.
    EmmWrite(emm_write::EmmWriteArgs),
    /// Generate a seeded synthetic corpus.
    Synth(synth::SynthArgs),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "info",
        1 => "debug",
        _ => "trace",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let outcome = FileConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Segment(args) => segment::run(args, &cfg),
        Command::Attribute(args) => attribute::run(args, &cfg),
        Command::Diagnose(args) => diagnose::run(args, &cfg),
        Command::EmmWrite(args) => emm_write::run(args),
        Command::Synth(args) => synth::run(args),
    });
    match outcome {
        Ok(o) => o.exit_code(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
