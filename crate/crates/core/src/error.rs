use thiserror::Error;

/// Errors raised by the state, cavity and imperfection models.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {0}: at least one time bin is required")]
    InvalidDimension(usize),
    #[error("MUB index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("state has zero norm")]
    ZeroNorm,
    #[error("state must be normalized")]
    NotNormalized,
    #[error("bin {bin} is before the first accepted bin {dim}")]
    WindowViolation { bin: usize, dim: usize },
    #[error("bin {bin} outside 1..={dim}")]
    BinOutOfRange { bin: usize, dim: usize },
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("all conditional probabilities vanish")]
    DegenerateConfig,
    #[error("round-trip factor {0} outside [0, 1)")]
    Domain(f64),
    #[error("bin cap {cap} below last accepted bin {n_prime}")]
    CapTooSmall { cap: usize, n_prime: usize },
    #[error("effective round-trip factor {target} unreachable with overlap {eta}")]
    UnreachableTarget { target: f64, eta: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
