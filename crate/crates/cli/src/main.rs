//! `hiergnn`: ingest → vocabulary → vectors → graphs → train → evaluate →
//! explain, one subcommand per stage.

mod args;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use args::*;
use config::PipelineConfig;

#[derive(Debug, Parser)]
#[command(
    name = "hiergnn",
    version,
    about = "Tree GCN classification of hierarchical registry documents"
)]
struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every stochastic stage.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and label a directory of registry protocols.
    Ingest(IngestArgs),
    /// Generate a synthetic corpus with a planted field signal.
    Synth(SynthArgs),
    /// Build the vocabulary and the sparse random projector.
    BuildVocab(BuildVocabArgs),
    /// Compute projected TF-IDF vectors for every leaf, document and field.
    Vectorize(VectorizeArgs),
    /// Assemble featured graphs (and flat baseline inputs).
    BuildGraphs(BuildGraphsArgs),
    /// Train a model with validation-based selection.
    Train(TrainArgs),
    /// Score a split and write a metrics report.
    Evaluate(EvaluateArgs),
    /// Per-field gradient attributions of a selective model.
    Explain(ExplainArgs),
    /// Export pooled representations for external visualisation.
    ExportEmbeddings(ExportArgs),
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = PipelineConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &cfg),
        Command::Synth(a) => {
            a.apply(&mut cfg);
            commands::synth(a, &cfg)
        }
        Command::BuildVocab(a) => {
            a.apply(&mut cfg);
            commands::build_vocab(a, &cfg)
        }
        Command::Vectorize(a) => {
            a.apply(&mut cfg);
            commands::vectorize(a, &cfg)
        }
        Command::BuildGraphs(a) => commands::build_graphs(a, &cfg),
        Command::Train(a) => {
            a.apply(&mut cfg);
            commands::train_cmd(a, &cfg)
        }
        Command::Evaluate(a) => commands::evaluate_cmd(a, &cfg),
        Command::Explain(a) => {
            a.apply(&mut cfg);
            commands::explain(a, &cfg)
        }
        Command::ExportEmbeddings(a) => commands::export(a, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
