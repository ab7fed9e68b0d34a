use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("regime violation: {0}")]
    RegimeViolation(String),
    #[error("overdamped parameters (omega0 = {omega0} <= gamma0 = {gamma0}) are not supported for this regime")]
    OverdampedUnsupported { omega0: f64, gamma0: f64 },
    #[error("correlator model carries no Brownian provenance")]
    MissingProvenance,
    #[error("basis unsupported: {0}")]
    BasisUnsupported(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("zero weight at flat index {0}")]
    ZeroWeight(usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("truncation too small: {0}")]
    TruncationTooSmall(String),
    #[error("transform is numerically singular (condition estimate {0:.3e})")]
    SingularTransform(f64),
    #[error("step size underflow at t = {time}; try the one-sided strong-damping frame or a shorter span")]
    StepSizeUnderflow { time: f64 },
    #[error("non-finite extended state first seen at t = {time}")]
    NonFiniteState { time: f64 },
    #[error("no stationary auxiliary state for frame {0}")]
    NoStationaryState(String),
    #[error("quadrature failed to reach tolerance on [{a}, {b}]")]
    QuadratureFailure { a: f64, b: f64 },
    #[error("time grids differ between {0} and {1}")]
    GridMismatch(String, String),
}

pub type Result<T> = std::result::Result<T, Error>;
