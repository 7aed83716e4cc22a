//! One error enum for the whole crate. Variants are grouped by which CLI
//! exit code they map to: config problems exit 1, data problems exit 2,
//! a failed gradient check exits 3.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // --- configuration / usage (exit code 1) ---
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("config file {path}: line {line}: {msg}")]
    ConfigParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("usage: {0}")]
    Usage(String),

    // --- shape and model construction errors (exit code 1) ---
    #[error("shape mismatch in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("routing error: {0}")]
    Routing(String),

    // --- data / io (exit code 2) ---
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),

    // --- verification (exit code 3) ---
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl Error {
    /// Process exit code for the CLI. 0 is success and never appears here.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_)
            | Error::ConfigParse { .. }
            | Error::Usage(_)
            | Error::Shape { .. }
            | Error::Routing(_) => 1,
            Error::Io { .. }
            | Error::Format { .. }
            | Error::Data(_)
            | Error::CheckpointMismatch(_) => 2,
            Error::GradCheck(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn shape(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Shape {
            op,
            msg: msg.into(),
        }
    }
}
