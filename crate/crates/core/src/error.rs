use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("belief vector has a non-finite component")]
    NonFinite,

    #[error("belief vector norm {norm} lies outside the unit ball")]
    OutsideUnitBall { norm: f64 },

    #[error("invalid {key}: {message}")]
    InvalidField { key: &'static str, message: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("projection {value} outside [-1, 1]")]
    ProjectionOutOfRange { value: f64 },

    #[error("misinformation requested (ratio {ratio}) but there are no committed agents")]
    NoCommittedAgents { ratio: f64 },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
