use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Config,
    Io,
    DataContract,
    Convergence,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed WAV file {path}: {reason}")]
    MalformedWav { path: PathBuf, reason: String },

    #[error("unsupported audio format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("clip too short: {samples} samples, need at least {needed}")]
    ClipTooShort { samples: usize, needed: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("feature extractor mismatch: model expects {expected}, got {actual}")]
    ExtractorMismatch { expected: String, actual: String },

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("infeasible nu: nu * l = {nu_l} < 1")]
    InfeasibleNu { nu_l: f64 },

    #[error("solver did not converge after {iterations} iterations (violation {violation:e})")]
    NonConvergence { iterations: usize, violation: f64 },

    #[error("feature file {path}: {reason}")]
    FeatureFile { path: PathBuf, reason: String },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("model file {path}: {reason}")]
    ModelFile { path: PathBuf, reason: String },

    #[error("{failed} of {total} clips failed: {details}")]
    Batch {
        failed: usize,
        total: usize,
        details: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::InfeasibleNu { .. } => ErrorClass::Config,
            Error::MissingFile(_) | Error::Io { .. } => ErrorClass::Io,
            Error::NonConvergence { .. } => ErrorClass::Convergence,
            Error::MalformedWav { .. }
            | Error::UnsupportedFormat { .. }
            | Error::InvalidInput(_)
            | Error::ClipTooShort { .. }
            | Error::DimensionMismatch { .. }
            | Error::ExtractorMismatch { .. }
            | Error::EmptyTrainingSet
            | Error::FeatureFile { .. }
            | Error::Manifest(_)
            | Error::ModelFile { .. }
            | Error::Batch { .. } => ErrorClass::DataContract,
        }
    }
}
