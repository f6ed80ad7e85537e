use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("size error in {op}: {detail}")]
    Size { op: &'static str, detail: String },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("{path}: line {line}: {msg}")]
    CubeParse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: byte {offset}: {msg}")]
    ImageParse {
        path: PathBuf,
        offset: usize,
        msg: String,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),

    #[error("config: line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("training: {0}")]
    Training(String),

    #[error("non-finite gradient for parameter `{param}` at step {step}")]
    NonFiniteGradient { param: String, step: u64 },

    #[error("non-finite loss {loss} at step {step}")]
    NonFiniteLoss { loss: f64, step: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic {0:?}, not a FLUT checkpoint")]
    BadMagic([u8; 4]),

    #[error("unsupported version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("truncated in section `{section}`: needed {needed} bytes, {available} available")]
    Truncated {
        section: String,
        needed: usize,
        available: usize,
    },

    #[error("malformed section `{section}`: {detail}")]
    Malformed { section: String, detail: String },

    #[error("missing section `{0}`")]
    MissingSection(&'static str),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn size(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Size {
            op,
            detail: detail.into(),
        }
    }

    /// Whether this error came from bad caller input (flags, shapes, indices)
    /// rather than from the environment or a failed computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Usage(_) | Error::Shape { .. } | Error::Size { .. } | Error::Config { .. }
        )
    }
}
