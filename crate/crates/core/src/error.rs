use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("position ({x}, {y}) lies outside the {side} m region")]
    OutOfRegion { x: f64, y: f64, side: f64 },

    #[error("cell ({row}, {col}) is outside a {dim}x{dim} grid")]
    CellOutOfRange { row: usize, col: usize, dim: usize },

    #[error("uniform placement needs a perfect-square node count, got {0}")]
    NonSquareCount(usize),

    #[error("no connected topology found after {attempts} attempt(s)")]
    TopologyInfeasible { attempts: u32 },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("nothing to analyze: {0}")]
    EmptyInput(String),

    #[error("{path}: schema mismatch: {message}")]
    Schema { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
