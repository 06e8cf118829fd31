//! Batch commands over the captioning stack. The binary is a thin wrapper
//! around [`run`]; tests drive the same entry point in-process.

pub mod commands;
pub mod corpus;
pub mod manifest;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use hcap_core::annotation::AnnotationError;
use hcap_core::diffcore::TensorError;
use hcap_core::metrics::MetricsError;
use hcap_core::model::ModelError;
use hcap_core::synth::SynthError;
use hcap_core::text::VocabError;
use thiserror::Error;

pub use commands::{
    evaluate, load_model, sidecar, train_config, validate_dir, validate_file, EvalArgs, FileReport,
    GradcheckArgs, InferArgs, StatsArgs, SynthArgs, TrainArgs, ValidateArgs,
};
pub use manifest::RunManifest;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Vocab(#[from] VocabError),
}

impl CliError {
    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// How a command ended when it ran to completion. `Failure` means the
/// command did its job and found a problem (an invalid file, a failing
/// kernel); errors that stop a command early are [`CliError`]s.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Parser)]
#[command(
    name = "hcap",
    version,
    about = "Person-centric dense video captioning: data, training and evaluation",
    long_about = "Person-centric dense video captioning: data, training and evaluation.\n\n\
                  Log verbosity comes from the HCAP_LOG environment variable \
                  (error, warn, info, debug, trace; default warn)."
)]
pub struct Cli {
    /// Where to write this run's manifest. Commands with an output
    /// location default to a file beside it; the others print the
    /// manifest to stderr.
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Check annotation files and report field-level diagnostics.
    Validate(ValidateArgs),
    /// Summarize an annotation directory.
    Stats(StatsArgs),
    /// Train a model and write a checkpoint with its loss log.
    Train(TrainArgs),
    /// Decode predictions for a corpus subset.
    Infer(InferArgs),
    /// Score predictions against ground-truth annotations.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable kernel.
    Gradcheck(GradcheckArgs),
}

/// What a command hands back to [`run`].
pub(crate) struct Ran {
    pub outcome: Outcome,
    pub manifest: RunManifest,
    /// Default manifest location when `--manifest` is not given.
    pub manifest_path: Option<PathBuf>,
}

/// Runs one command, writing its report to `out` and its manifest to the
/// chosen location.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let ran = match cli.command {
        Command::Synth(a) => commands::cmd_synth(&a, out)?,
        Command::Validate(a) => commands::cmd_validate(&a, out)?,
        Command::Stats(a) => commands::cmd_stats(&a, out)?,
        Command::Train(a) => commands::cmd_train(&a, out)?,
        Command::Infer(a) => commands::cmd_infer(&a, out)?,
        Command::Eval(a) => commands::cmd_eval(&a, out)?,
        Command::Gradcheck(a) => commands::cmd_gradcheck(&a, out)?,
    };
    let Ran {
        outcome,
        mut manifest,
        manifest_path,
    } = ran;
    manifest.finish(start.elapsed());
    match cli.manifest.or(manifest_path) {
        Some(path) => std::fs::write(&path, manifest.to_json()).map_err(CliError::io(&path))?,
        None => eprint!("{}", manifest.to_json()),
    }
    Ok(outcome)
}
