use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad header, wrong size, unparsable token).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input whose values violate a data invariant.
    #[error("data error: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("class {class} has {available} labeled pixels, {requested} requested")]
    InsufficientPixels {
        class: u32,
        available: usize,
        requested: usize,
    },

    #[error("instance too large for enumeration: {configs} configurations exceed limit {limit}")]
    TooLarge { configs: f64, limit: u64 },

    #[error("edge {edge} ({i}, {j}) is not submodular")]
    NonSubmodular { edge: usize, i: usize, j: usize },

    #[error("pairwise energy is not a metric: {0}")]
    NonMetric(String),

    #[error("unknown method '{0}'")]
    UnknownMethod(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the contents of input data rather than by
    /// how the library was called.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Format(_)
                | Error::Data(_)
                | Error::DimensionMismatch(_)
                | Error::InsufficientPixels { .. }
        )
    }
}
