use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("state error: {0}")]
    State(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("ingestion error at row {row}: {message}")]
    Ingest { row: usize, message: String },

    #[error("round {round} ({phase}): {source}")]
    Round {
        round: usize,
        phase: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with its round; an already tagged error keeps its inner phase.
    pub(crate) fn in_round(self, round: usize, phase: &'static str) -> Self {
        if matches!(self, Error::Round { .. }) {
            return self;
        }
        Error::Round {
            round,
            phase,
            source: Box::new(self),
        }
    }

    /// Process exit code for the CLI: 2 config, 3 runtime/numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::Usage(_) => 2,
            Error::Io { .. } => 4,
            Error::Round { source, .. } => source.exit_code(),
            Error::Ingest { .. } => 2,
            Error::Shape(_) | Error::Numeric(_) | Error::State(_) | Error::Internal(_) => 3,
        }
    }
}
