use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A data row that could not be ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    /// 1-based line number in the source file (header is line 1).
    pub line: usize,
    pub column: String,
    pub message: String,
}

impl std::fmt::Display for RowError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "line {}, column `{}`: {}",
            self.line, self.column, self.message
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),

    #[error("invalid forest ({location}): {message}")]
    InvalidForest { location: String, message: String },

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("degenerate box: feature {feature} has empty interval [{lo}, {hi}]")]
    DegenerateBox { feature: usize, lo: f64, hi: f64 },

    #[error("training error: {0}")]
    Training(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{} bad row(s); first: {}", .0.len(), .0.first().map(|r| r.to_string()).unwrap_or_default())]
    Rows(Vec<RowError>),

    #[error("oracle refused: {combinations} combinations exceed cap {cap}")]
    OracleCap { combinations: u128, cap: u128 },

    #[error("ranking error: {0}")]
    Ranking(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn forest(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidForest {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn from_json(err: serde_json::Error) -> Self {
        Error::Parse {
            location: format!("line {} column {}", err.line(), err.column()),
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
