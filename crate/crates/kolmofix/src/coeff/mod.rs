//! Coefficient machinery: the expression language for diffusion and drift
//! entries, compilation against a frozen measure, structural hypothesis
//! checkers, and kernel smoothing.

pub mod ast;
pub mod bind;
pub mod checks;
pub mod field;
pub mod mollify;
pub mod parse;

pub use ast::{CoeffExpr, IndOp};
pub use bind::{bind_expr, BoundCoeff};
pub use checks::{check_h11, check_h12, check_h13, AssumptionReport, Witness};
pub use field::{eval_coeff, BoundField, CoeffEntry, CoefficientField, NativeEntry};
pub use mollify::{mollify, KernelKind, Mollified, MollifierKernel};
pub use parse::parse_coeff;
