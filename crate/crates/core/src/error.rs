use std::path::PathBuf;

use thiserror::Error;

use crate::model::WalkViolation;

/// Errors raised by the valuation engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid random walk: {0}")]
    Walk(#[from] WalkViolation),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate lattice: up factor equals down factor")]
    DegenerateLattice,

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("path enumeration refused: depth {depth} exceeds the bound of {max}")]
    EnumerationBound { depth: u64, max: u64 },

    #[error("short coin position of {coins} at turn {turn} while short selling is disabled")]
    ShortPosition { turn: u64, coins: f64 },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: u64,
        column: usize,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// True for failures caused by input data (files, history coverage)
    /// rather than by parameter validation.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Data(_) | Error::Parse { .. } | Error::Io { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
