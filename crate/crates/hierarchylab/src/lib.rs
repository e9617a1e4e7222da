//! Finite-width cumulant hierarchy of random fully connected networks.
//!
//! * [`nonlin`]: activations with analytic derivatives and Taylor data.
//! * [`gauss`]: Gauss–Hermite expectations, weak derivatives, T-functionals.
//! * [`bracket`]: memoized Gaussian brackets ⟨∂^k(σ^p σ′^q)⟩_K.
//! * [`crit`]: criticality tuning, susceptibilities, universality classes.
//! * [`hierarchy`]: kernel map and the κ₄/κ₆/κ₈ recursions.
//! * [`derivs`]: input-derivative kernels, their cumulants, EVGP prediction.
//! * [`homog`]: closed forms and the exact sampler for 1-homogeneous σ.
//! * [`mc`]: Monte Carlo oracle over sampled finite-width networks.
//! * `cli` (feature `cli`): the command-line front end.

// `!(x > 0.0)` is used on purpose so that NaN fails validation, and indexed
// loops mirror the tensor notation of the recursions.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bracket;
#[cfg(feature = "cli")]
pub mod cli;
pub mod crit;
pub mod derivs;
pub mod error;
pub mod gauss;
pub mod hierarchy;
pub mod homog;
pub mod mc;
pub mod network;
pub mod nonlin;
pub mod rng;

pub use crit::{tune_critical, CriticalTuning, UniversalityClass};
pub use error::{Error, Result};
pub use gauss::{Kernel1, Kernel2};
pub use hierarchy::{run_hierarchy, CumulantState, Trajectory};
pub use network::{NetworkConfig, NetworkSpec};
pub use nonlin::Nonlinearity;
