//! Crate-wide error type and the exit-code classes used by the CLI.

use std::path::PathBuf;

/// Errors produced by the generation, labeling, model, and I/O layers.
///
/// Every variant belongs to one of two exit-code classes: data errors
/// (malformed files, unsatisfiable requests, contract violations) map to
/// exit code 3, numerical failures (ill-conditioned systems, degenerate
/// geometry) map to exit code 4. Usage errors are handled by the argument
/// parser and exit with 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("insufficient candidates: cloud has {have} nodes, need at least {need}")]
    InsufficientCandidates { have: usize, need: usize },

    #[error("zero-radius stencil: every node coincides with the central node")]
    ZeroRadius,

    #[error("ill-conditioned stencil system: pivot-ratio estimate {cond:.3e} exceeds {limit:.0e}")]
    IllConditioned { cond: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no quartile borders recorded for stencil size {0}")]
    MissingBorders(usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("undefined AUC: need at least one positive and one negative sample")]
    UndefinedAuc,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code class for the CLI: 3 = data error, 4 = numerical error.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::ZeroRadius | Error::IllConditioned { .. } | Error::UndefinedAuc => 4,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
