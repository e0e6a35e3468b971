//! kolmofix: solve-and-certify toolkit for stationary distributions of
//! mean-field diffusions whose coefficients may depend on the distribution
//! itself and whose diffusion matrix may be degenerate outside a
//! non-degenerate leading block.
//!
//! The pipeline: freeze the distribution argument of the coefficients, solve
//! the resulting linear stationary equation with one of three backends
//! (closed-form, finite-volume, simulated trajectories), iterate the frozen
//! solve to a fixed point with damping, and numerically certify the
//! drift/growth conditions that justify existence of the fixed point and the
//! reported moment bounds.

pub mod coeff;
pub mod diagnostics;
pub mod error;
pub mod fixedpoint;
pub mod frozen;
pub mod func;
pub mod lyapunov;
pub mod measure;
pub mod problem;
pub mod util;

pub use error::{Error, Result};

/// Temporary CLI entry point; replaced by the real driver in `cli`.
pub fn cli_main() -> i32 {
    0
}
