use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuctionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("price must be finite, got {0}")]
    NonFinitePrice(f64),

    #[error("truncation error bound {achieved:e} exceeds requested tolerance {requested:e}")]
    ToleranceNotMet { achieved: f64, requested: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e}, requested {requested:e}")]
    QuadratureFailure { achieved: f64, requested: f64 },

    #[error("order count {total} exceeds cap {cap}")]
    CapExceeded { total: usize, cap: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("sample value at index {index} must be positive, got {value}")]
    NonPositiveValue { index: usize, value: f64 },

    #[error("insufficient expected coverage: {0}")]
    InsufficientCoverage(String),

    #[error("degenerate market: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, AuctionError>;

pub(crate) fn invalid(msg: impl Into<String>) -> AuctionError {
    AuctionError::InvalidParameter(msg.into())
}
