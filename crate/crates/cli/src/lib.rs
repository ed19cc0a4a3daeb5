//! Command-line front end for the `trajmask` toolkit.
//!
//! Every subcommand takes an optional `--config` JSON file (either a plain
//! config document or a previous run's manifest) plus flag overrides, and
//! writes `<primary output>.manifest.json` when it finishes.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 runtime failure.

use std::ffi::OsString;

use clap::Parser;
use thiserror::Error;
use trajmask::masking::MaskError;
use trajmask::metrics::MetricError;
use trajmask::model::ModelError;
use trajmask::occlusion::OcclusionError;
use trajmask::scene::SceneError;
use trajmask::synth::SynthError;
use trajmask::training::TrainError;

mod commands;
mod manifest;
mod svg;

pub use commands::{
    AblateConfig, EvaluateConfig, FinetuneConfig, LabelOcclusionConfig, MaskPreviewConfig, PlotConfig, PlotKind,
    PretrainConfig, SynthGenConfig,
};
pub use manifest::{config_digest, manifest_path, RunManifest, TOOL_VERSION};

/// Environment variable naming the directory for outputs not given explicitly.
pub const OUT_DIR_ENV: &str = "TRAJMASK_OUT_DIR";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Scene(s) => s.into(),
            SynthError::InvalidSpec(_) => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NonFinite(_) | ModelError::Io(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Divergence { .. } | TrainError::NonFiniteGradient { .. } => CliError::Runtime(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Metric(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Model(m) => m.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<OcclusionError> for CliError {
    fn from(e: OcclusionError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MaskError> for CliError {
    fn from(e: MaskError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parses `argv` (program name first) and runs the subcommand. Diagnostics
/// go to stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match commands::Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
