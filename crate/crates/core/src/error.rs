use std::path::PathBuf;

use thiserror::Error;

use crate::models::ModelFamily;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Data {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: {message}")]
    Config {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("static arbitrage in surface at expiry {expiry}: {message}")]
    Arbitrage { expiry: f64, message: String },

    #[error("option grids differ")]
    GridMismatch,

    #[error("{family} has no characteristic function")]
    NoCharacteristicFunction { family: ModelFamily },

    #[error("argument {argument} lies outside the analyticity strip of {family}")]
    OutsideStrip {
        family: ModelFamily,
        argument: String,
    },

    #[error("inadmissible {family} parameters: {message}")]
    Inadmissible {
        family: ModelFamily,
        message: String,
    },

    #[error("{family} {params}: {message}")]
    Quadrature {
        family: ModelFamily,
        params: String,
        message: String,
    },

    #[error("implied volatility inversion failed: {0}")]
    ImpliedVol(String),

    #[error("instance {index} ({instance}): {source}")]
    Instance {
        index: usize,
        instance: String,
        #[source]
        source: Box<Error>,
    },

    #[error("degenerate training set: {0}")]
    DegenerateTraining(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Coarse category used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. } => ErrorCategory::Config,
            Error::Data { .. } | Error::Csv(_) | Error::Arbitrage { .. } | Error::GridMismatch => {
                ErrorCategory::Data
            }
            Error::Io(_) => ErrorCategory::Io,
            Error::Instance { source, .. } => source.category(),
            Error::InvalidInput(_) | Error::Inadmissible { .. } => ErrorCategory::Input,
            Error::NoCharacteristicFunction { .. }
            | Error::OutsideStrip { .. }
            | Error::Quadrature { .. }
            | Error::ImpliedVol(_)
            | Error::DegenerateTraining(_) => ErrorCategory::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Config,
    Data,
    Numerical,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Input => 2,
            ErrorCategory::Config => 3,
            ErrorCategory::Data => 4,
            ErrorCategory::Numerical => 5,
            ErrorCategory::Io => 6,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Input => "input",
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numerical => "numerical",
            ErrorCategory::Io => "io",
        }
    }
}
