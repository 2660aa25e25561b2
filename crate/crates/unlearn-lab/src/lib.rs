//! IO companion to `unlearn-core`: wire adapters for the model ports,
//! JSONL dataset and evaluation-log formats, run configuration, report
//! emission (JSON/CSV/SVG), and the command-line surface.

pub mod cli;
pub mod clients;
pub mod config;
pub mod dataset;
pub mod evallog;
pub mod report;

use unlearn_core::metrics::MetricsError;
use unlearn_core::neighborset::NeighborSetError;
use unlearn_core::ports::PortError;
use unlearn_core::textsim::MaskError;
use unlearn_core::toylab::ToyLabError;

/// Crate-wide error type; the CLI maps these onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {source}")]
    Parse {
        path: String,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("configuration invalid:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error(transparent)]
    Port(#[from] PortError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    NeighborSet(#[from] NeighborSetError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    ToyLab(#[from] ToyLabError),
    #[error("{0}")]
    Invalid(String),
}

impl LabError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Exit code 2 for user errors (bad config/flags), 1 for domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            _ => 1,
        }
    }
}
