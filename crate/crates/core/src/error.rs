//! Error type shared across the crate.

use thiserror::Error;

use crate::graph::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid edge list: {0}")]
    InvalidEdgeList(String),
    #[error("nonpositive vertex measure at label {label}: {value}")]
    NonpositiveMeasure { label: i64, value: f64 },
    #[error("invalid truncation level {level}: {reason}")]
    InvalidLevel { level: u32, reason: String },
    #[error("graph fails validation:\n{0}")]
    InvalidGraph(ValidationReport),
    #[error("vertex sets differ: {0}")]
    VertexSetMismatch(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vertex index {index} out of range for {count} vertices")]
    VertexOutOfRange { index: usize, count: usize },
    #[error("time must be positive, got {0}")]
    NonpositiveTime(f64),
    #[error("Chebyshev order overflow: step needs order > {max}; split the time step")]
    OrderOverflow { max: usize },
    #[error("dense backend limited to {max} vertices, graph has {got}")]
    DenseTooLarge { got: usize, max: usize },
    #[error("matrix is not symmetric positive definite")]
    NotPositiveDefinite,
    #[error("phi values missing for scheduled vertices: need {needed}, got {got}")]
    MissingPhiValues { needed: usize, got: usize },
    #[error("invalid level schedule: {0}")]
    InvalidSchedule(String),
    #[error("wave packet does not fit: {0}")]
    PacketDoesNotFit(String),
    #[error("carrier momentum must lie in (0, pi), got {0}")]
    InvalidMomentum(f64),
    #[error("time grid reaches {t_last}, beyond the trusted window ending at {t_max}")]
    GridExceedsTrustedWindow { t_last: f64, t_max: f64 },
    #[error("trusted window too short: {points} grid points, need at least {min}")]
    WindowTooShort { points: usize, min: usize },
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
