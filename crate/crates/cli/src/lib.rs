//! Batch experiment runner for `dppcond`.
//!
//! An experiment is a JSON config naming kernels (files, factories or
//! generated corpora) and the checks to run on them. [`run`] executes every
//! check and writes `report.json`, `summary.csv`, plot data and a separate
//! `metadata.json` holding everything that is not reproducible (timings,
//! thread counts). The report itself depends only on the config and seed.

pub mod config;
pub mod corpus;
pub mod describe;
pub mod factory_spec;
pub mod run;

pub use config::{CheckSpec, ExperimentConfig, KernelSource, ModeSelection, Overrides};
pub use corpus::{gen_corpus, CorpusSpec, Manifest};
pub use describe::describe;
pub use run::{run, RunOutcome};

use dppcond::DppError;

/// Failure of a CLI operation, with its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Invalid config, arguments or input files.
    #[error("configuration error: {0}")]
    Config(String),
    /// A computation broke down numerically.
    #[error("numerical breakdown: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<DppError> for CliError {
    fn from(e: DppError) -> Self {
        match e {
            DppError::NumericalBreakdown(_) | DppError::NotADistribution { .. } | DppError::SquareRootFailure { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
struct Guide;
