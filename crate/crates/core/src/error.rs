use thiserror::Error;

/// Errors surfaced by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid user-supplied configuration (bad parameter, inconsistent sizes).
    #[error("configuration error: {0}")]
    Config(String),

    /// Mathematical domain violation, e.g. a negative power of a zero eigenvalue.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector from one backend or resolution handed to another.
    #[error("backend mismatch: expected {expected}, got {got}")]
    BackendMismatch { expected: String, got: String },

    /// Index outside the stored table.
    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// Non-finite value or failed iteration.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invariant that should be impossible under the documented preconditions.
    #[error("internal error: {0}")]
    Internal(String),

    /// A Monte Carlo sample failed; the seed reproduces it.
    #[error("sample {sample} (seed {seed}) failed: {source}")]
    Sample {
        sample: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) | Error::BackendMismatch { .. } | Error::OutOfRange(_) => true,
            Error::Sample { source, .. } => source.is_config(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
