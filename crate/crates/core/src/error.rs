use std::path::PathBuf;

/// Errors produced across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed file: {0}")]
    Format(String),

    #[error("unsupported encoding: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The target cannot be aligned to the given number of frames.
    #[error("CTC target of length {target_len} needs {required} frames, got {frames}")]
    Infeasible {
        target_len: usize,
        required: usize,
        frames: usize,
    },

    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
