use thiserror::Error;

use crate::theta::ThetaError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Theta(#[from] ThetaError),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("index {index} outside the ring of dimension {d}")]
    IndexOutOfRange { index: i64, d: usize },
    #[error("dimension {d} exceeds the dense-matrix cap {cap}")]
    DimensionTooLarge { d: usize, cap: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("outcome density has total mass {0:e}")]
    DegenerateDensity(f64),
    #[error("{what} normalisation drifted by {drift:e}")]
    NormalizationDrift { what: &'static str, drift: f64 },
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
