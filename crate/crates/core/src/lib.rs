//! Joint activity detection and channel estimation for grant-free massive
//! machine-type communications with low-resolution ADCs.
//!
//! The library covers the full simulation and recovery chain:
//!
//! - [`system_model`]: clustered angular-domain channels, QPSK pilots, and the
//!   real-valued measurement operator.
//! - [`quantizer`]: Lloyd-Max scalar quantizer design and component-wise
//!   complex quantization.
//! - [`bussgang`]: Bussgang linearization of the quantized observation into an
//!   effective linear-Gaussian model, plus the solver coefficients.
//! - [`sparse_prior`]: two-level hierarchical prior (device activity on top of
//!   element-wise channel sparsity), responsibilities, and surrogate weights.
//! - [`mm_solver`]: majorization-minimization iteration with a diagonal
//!   closed-form update.
//! - [`detector`]: activity log-odds thresholding, channel reconstruction, and
//!   performance metrics.
//! - [`sim`]: seeded Monte-Carlo trials and parameter sweeps with CSV output.

pub mod bussgang;
pub mod config;
pub mod detector;
pub mod linops;
pub mod mm_solver;
pub mod quantizer;
pub mod selftest;
pub mod sim;
pub mod sparse_prior;
pub mod system_model;

pub use config::{AdcBits, Omega2Mode, PriorHyper, SolverOptions, SystemConfig};
pub use detector::{DetectionResult, MetricsRecord};
pub use quantizer::{Quantizer, ScalarQuantizer};
pub use sim::{SweepAxis, SweepSpec, TrialRecord};

use thiserror::Error;

/// Errors surfaced by model construction, solvers, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Lloyd-Max design did not converge after {iters} iterations (last relative change {delta:.3e})")]
    LloydMaxNonConvergence { iters: usize, delta: f64 },
    #[error("objective increased at iteration {iter} by relative {delta:.3e}; spectral bound J is likely underestimated")]
    ObjectiveIncrease { iter: usize, delta: f64 },
    #[error("trial {seed} failed: {source}")]
    Trial {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
