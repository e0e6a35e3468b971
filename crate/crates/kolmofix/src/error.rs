//! Crate-wide error type.
//!
//! Every fallible operation returns [`Error`]; variants carry enough context
//! (points, indices, line/column) for a caller to locate the offending input
//! without re-running the computation.

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in an expression or problem file.
    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },

    /// Structurally valid input that violates a documented precondition.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A function produced a non-finite value where a finite one is required.
    #[error("{what} is non-finite at point {point:?}")]
    NonFinite { what: String, point: Vec<f64> },

    /// Test-function battery was empty where at least one function is needed.
    #[error("empty test-function battery: {op} needs at least one test function")]
    EmptyBattery { op: &'static str },

    /// Measure with zero total weight where positive mass is required.
    #[error("measure has zero total weight: {op} requires positive mass")]
    ZeroMass { op: &'static str },

    /// Two measures that must carry equal mass do not.
    #[error("total-mass mismatch: {left} vs {right} (difference {diff:e})")]
    MassMismatch { left: f64, right: f64, diff: f64 },

    /// Operation not available in the requested dimension.
    #[error("{op} is not supported in dimension {dim}: {detail}")]
    UnsupportedDimension {
        op: &'static str,
        dim: usize,
        detail: String,
    },

    /// Division by zero while evaluating a coefficient expression.
    #[error("division by zero in `{expr}` at x = {x:?}")]
    DivisionByZero { expr: String, x: Vec<f64> },

    /// Coefficient evaluation produced NaN or infinity.
    #[error("non-finite value of `{expr}` at x = {x:?}")]
    NonFiniteCoeff { expr: String, x: Vec<f64> },

    /// Diffusion coefficient too small for a backend that divides by it.
    #[error(
        "degenerate diffusion coefficient (min {min_value:e} at x = {at:?}); {hint}"
    )]
    DegenerateCoefficient {
        min_value: f64,
        at: Vec<f64>,
        hint: String,
    },

    /// A simulated trajectory left the admissible region.
    #[error("trajectory blow-up: particle {particle} first exited at time {time}")]
    BlowUp { particle: usize, time: f64 },

    /// Diffusion matrix failed the positive-semidefiniteness tolerance.
    #[error("diffusion matrix not positive semidefinite at x = {x:?} (min eigenvalue {eigmin:e})")]
    NotPsd { x: Vec<f64>, eigmin: f64 },

    /// Discrete solution developed negative cells beyond tolerance.
    #[error("grid solution lost positivity: cell {cell} has value {value:e}")]
    PositivityLost { cell: usize, value: f64 },

    /// Linear-algebra failure (singular or ill-conditioned system).
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// An inner solve inside an outer iteration failed.
    #[error("inner solve failed at iteration {iteration}: {source}")]
    InnerSolve {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Shorthand for a [`Error::Config`] with a formatted message.
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
