//! Shared numeric utilities: deterministic reductions, cubes and grids,
//! smooth cutoffs, orthogonal polynomials, banded linear algebra, isotonic
//! regression, small symmetric eigenproblems, and seeded RNG streams.

pub mod banded;
pub mod bump;
pub mod cube;
pub mod hermite;
pub mod isotonic;
pub mod linalg;
pub mod rng;
pub mod sum;
