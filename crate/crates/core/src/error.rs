use std::path::PathBuf;

/// Errors raised across the toolkit.
///
/// Variants are grouped by the kind of failure so callers (notably the CLI)
/// can map them onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("unknown token {token:?} at position {position}")]
    Vocab { token: String, position: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("parse error at token {position} ({token:?}): {reason}")]
    Parse {
        token: String,
        position: usize,
        reason: String,
    },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("checkpoint load error: {0}")]
    Load(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Training { epoch: usize, reason: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by bad user input or data, as opposed to
    /// runtime failures during a computation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Shape(_)
                | Error::Validation(_)
                | Error::Vocab { .. }
                | Error::Parse { .. }
                | Error::Load(_)
                | Error::Io { .. }
                | Error::Serde(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
