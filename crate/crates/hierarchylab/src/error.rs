//! Error type shared by every module.
//!
//! Variants are split into two families that the command-line front end maps
//! onto distinct exit codes: *validation* errors (bad input, wrong class,
//! unsupported request; exit code 2) and *numerical* errors (non-finite values,
//! failed convergence; exit code 3).

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A derivative order beyond what the activation catalog provides.
    #[error("unsupported derivative order {order} (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },
    /// An operation that only makes sense for the K*=0 universality class.
    #[error("activation is not in the K*=0 universality class")]
    NotKStarZeroClass,
    /// A function evaluation produced NaN or an infinity.
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    /// A covariance matrix that is not positive semi-definite.
    #[error("covariance is not positive semi-definite: {0}")]
    NotPSD(String),
    /// A derivative of order ≥ 1 requested at zero variance.
    #[error("singular kernel: derivative of order {order} requested at K = 0")]
    SingularKernel { order: usize },
    /// The critical-point solver did not converge or produced C_b < 0.
    #[error("no critical point found: {0}")]
    NoCriticalPoint(String),
    /// A cumulant order outside the supported set.
    #[error("bad order {0}: expected one of 2, 3, 4")]
    BadOrder(usize),
    /// A parameter outside its admissible range.
    #[error("value out of range: {0}")]
    OutOfRange(String),
    /// Fewer Monte Carlo draws than the estimator contract allows.
    #[error("insufficient samples: {got} < {min}")]
    InsufficientSamples { got: usize, min: usize },
    /// The network input vector is identically zero.
    #[error("network input is the zero vector")]
    ZeroInput,
    /// Malformed configuration (JSON schema violations, inconsistent sizes).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// True for errors caused by invalid requests rather than by numerics.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NonFinite(_) | Error::NoCriticalPoint(_))
    }

    /// Short machine-parsable tag used on the command line's stderr line.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::UnsupportedOrder { .. } => "UnsupportedOrder",
            Error::NotKStarZeroClass => "NotKStarZeroClass",
            Error::NonFinite(_) => "NonFinite",
            Error::NotPSD(_) => "NotPSD",
            Error::SingularKernel { .. } => "SingularKernel",
            Error::NoCriticalPoint(_) => "NoCriticalPoint",
            Error::BadOrder(_) => "BadOrder",
            Error::OutOfRange(_) => "OutOfRange",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::ZeroInput => "ZeroInput",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}
