use std::path::PathBuf;

use diffmath::DiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing required file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("class {0} has no training graphs")]
    EmptyClass(usize),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    #[error("oracle did not converge: {0}")]
    NotConverged(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Diff(#[from] DiffError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MissingFile(_) => "missing_file",
            Error::Parse { .. } => "parse",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::EmptyClass(_) => "empty_class",
            Error::LabelOutOfRange { .. } => "label_out_of_range",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NonFinite { .. } => "non_finite",
            Error::NotConverged(_) => "not_converged",
            Error::ManifestMismatch(_) => "manifest_mismatch",
            Error::Json(_) => "json",
            Error::Diff(_) => "diff",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
