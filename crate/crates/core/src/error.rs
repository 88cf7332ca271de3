use std::path::PathBuf;

use thiserror::Error;

use crate::mvee::Ellipsoid;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("invalid shape: {0}")]
    BadShape(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank {k} is out of range 1..={max}")]
    BadRank { k: usize, max: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPsd(f64),

    #[error("fewer than {k} independent directions: residual norms vanished at round {round}")]
    DegenerateInput { k: usize, round: usize },

    #[error("orthonormal basis collapsed to {rank} columns, {k} requested")]
    RankCollapse { rank: usize, k: usize },

    #[error("point matrix has rank {rank} < {k}")]
    RankDeficient { rank: usize, k: usize },

    #[error("MVEE solver did not converge (max violation {violation:e})")]
    NoConvergence {
        violation: f64,
        last: Box<Ellipsoid>,
    },

    #[error("could not draw a basis with sigma_min above threshold after {0} attempts")]
    DegenerateBasis(usize),

    #[error("index sets have different sizes ({found} vs {truth})")]
    SizeMismatch { found: usize, truth: usize },

    #[error("spectral angle undefined for a zero vector")]
    ZeroVector,

    #[error("basis matrix has rank {rank} < {k}")]
    RankDeficientBasis { rank: usize, k: usize },

    #[error("raster output requires image height and width metadata")]
    MissingShape,

    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
