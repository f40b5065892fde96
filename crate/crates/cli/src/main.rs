//! `mrs`: build corpora and indexes, run the retrieval pipeline, sample
//! training data, evaluate, sweep and ablate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 remote-component
//! error. Config keys can be overridden with `MRS__<SECTION>__<KEY>`.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mrs_core::config::ConfigError;
use mrs_core::experiment::ExperimentError;
use mrs_core::pipeline::PipelineError;
use mrs_core::scoring::ScoreError;

#[derive(Debug, Parser)]
#[command(name = "mrs", version, about = "Multi-level retrieval pipeline for multi-hop QA and fact verification")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Pipeline config (TOML).
    #[arg(long, global = true, env = "MRS_CONFIG")]
    pub config: Option<PathBuf>,
    /// Overrides `task.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "info", env = "MRS_LOG")]
    pub log_level: log::LevelFilter,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest source dumps into a binary store plus a plain_jsonl copy.
    BuildCorpus(commands::BuildCorpusArgs),
    /// Build and persist a TF-IDF index over a corpus store.
    BuildIndex(commands::BuildIndexArgs),
    /// Run the pipeline over a query file.
    Run(commands::RunArgs),
    /// Emit training pairs or downstream contexts from traced runs.
    Sample(commands::SampleArgs),
    /// Score official prediction files against gold.
    Eval(commands::EvalArgs),
    /// Vary one filter parameter and report each point.
    Sweep(commands::SweepArgs),
    /// Compare the full pipeline against single-stage removals.
    Ablate(commands::AblateArgs),
    /// Train the built-in paragraph and sentence scorers.
    Train(commands::TrainArgs),
}

/// Bad arguments or an unusable config.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// A remote scorer or adapter failed; carries a summary.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct RemoteError(pub String);

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() {
            return 1;
        }
        if cause.is::<RemoteError>() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<ExperimentError>() {
            if e.is_remote() {
                return 3;
            }
            if matches!(e, ExperimentError::InvalidSweep(_) | ExperimentError::Config(_)) {
                return 1;
            }
        }
        if cause.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_remote)
            || cause.downcast_ref::<ScoreError>().is_some_and(ScoreError::is_remote)
        {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
