use std::path::PathBuf;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    /// A value fell outside the domain it was declared against.
    #[error("input out of domain: {0}")]
    InputDomain(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Reports of differing lengths were passed to an aggregator.
    #[error("ragged input: expected length {expected}, found {found} at report {index}")]
    Ragged {
        expected: usize,
        found: usize,
        index: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The EM likelihood stopped being finite.
    #[error("non-finite likelihood at EM iteration {iteration}")]
    Numerical { iteration: usize },

    /// The segment design matrix lost rank.
    #[error("singular segment fit: interval {interval} has no identifying support")]
    SingularFit { interval: usize },

    /// A structure in the multi-dimensional model received fewer users than it needs.
    #[error("population for {structure} has {available} users, needs at least {required}")]
    Population {
        structure: String,
        available: usize,
        required: usize,
    },

    #[error("ingestion error at row {row}, column {column:?}: {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
