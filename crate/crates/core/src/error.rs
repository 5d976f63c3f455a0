use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dispersion g is not strictly monotone on its grid (first violation at sample {index})")]
    NonMonotoneDispersion { index: usize },

    #[error("grid too coarse: {got} samples, need at least {need}")]
    GridTooCoarse { got: usize, need: usize },

    #[error("Stieltjes procedure lost orthogonality: max deviation {loss:.3e} exceeds {limit:.0e}")]
    QuadratureUnstable { loss: f64, limit: f64 },

    #[error("invalid spectral density: {0}")]
    InvalidDensity(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("theorem bound needs X = P or X, P > 0; case {0} requires the general bound")]
    WrongCase(&'static str),

    #[error("Hilbert-space dimension {dim} exceeds cap {cap}")]
    DimensionOverflow { dim: u128, cap: usize },

    #[error("propagation failed to converge: {0}")]
    NoConvergence(String),

    #[error("unsupported initial state: {0}")]
    UnsupportedState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
