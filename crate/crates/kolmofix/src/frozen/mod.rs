//! Linear solves with the measure argument frozen: given a coefficient
//! field and a fixed measure `sigma` in its functionals, find the
//! stationary density of the resulting linear equation by closed form
//! (1-D, uniformly elliptic), conservative finite volumes (1-D/2-D grids),
//! or long-run trajectory averaging (any dimension, degeneracy allowed),
//! and measure how well a candidate measure annihilates the adjoint
//! operator in weak form.

pub mod closed;
pub mod ergodic;
pub mod fv;
pub mod residual;

pub use closed::solve_1d_closed;
pub use ergodic::{solve_ergodic, solve_ergodic_with_stats, ErgodicStats};
pub use fv::solve_grid_fv;
pub use residual::{default_battery, weak_residual, HermiteBump};

use crate::coeff::field::CoefficientField;
use crate::error::{Error, Result};
use crate::measure::Measure;
use crate::util::cube::Cube;
use serde::Serialize;

/// Boundary handling of the truncated computational domain. Only the
/// conservative (no-flux) closure is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Boundary {
    #[default]
    ZeroFlux,
}

/// A linear stationary problem: the coefficient field with `sigma` frozen
/// into its measure functionals, posed on a truncated box with zero-flux
/// boundaries.
#[derive(Clone)]
pub struct FrozenProblem {
    pub field: CoefficientField,
    pub sigma: Measure,
    pub domain: Cube,
    pub boundary: Boundary,
}

impl FrozenProblem {
    pub fn new(field: CoefficientField, sigma: Measure, domain: Cube) -> Result<Self> {
        if sigma.dim() != field.dim() {
            return Err(Error::config(format!(
                "frozen measure has dimension {} but the field has dimension {}",
                sigma.dim(),
                field.dim()
            )));
        }
        if domain.dim() != field.dim() {
            return Err(Error::config(format!(
                "domain has dimension {} but the field has dimension {}",
                domain.dim(),
                field.dim()
            )));
        }
        Ok(Self {
            field,
            sigma,
            domain,
            boundary: Boundary::ZeroFlux,
        })
    }
}

/// Configuration of the trajectory-averaging backend.
#[derive(Clone, Debug, Serialize)]
pub struct SdeConfig {
    /// Time step.
    pub dt: f64,
    /// Simulated horizon per particle.
    pub t_horizon: f64,
    /// Prefix of each trajectory discarded before averaging.
    pub burn_in: f64,
    pub n_particles: usize,
    pub seed: u64,
    /// Trajectories beyond this radius abort the solve.
    pub blow_up_radius: f64,
    /// Cap on the total number of recorded atoms (positions are thinned in
    /// time to stay below it).
    pub max_atoms: usize,
}

impl SdeConfig {
    pub fn new(dt: f64, t_horizon: f64, burn_in: f64, n_particles: usize, seed: u64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::config(format!("time step must be positive, got {dt}")));
        }
        if !(t_horizon > 0.0) || !t_horizon.is_finite() {
            return Err(Error::config(format!(
                "horizon must be positive and finite, got {t_horizon}"
            )));
        }
        if !(burn_in >= 0.0) || burn_in >= t_horizon {
            return Err(Error::config(format!(
                "burn-in {burn_in} must lie in [0, horizon = {t_horizon})"
            )));
        }
        if dt > t_horizon / 100.0 {
            return Err(Error::config(format!(
                "time step {dt} too coarse: need dt <= horizon/100 = {}",
                t_horizon / 100.0
            )));
        }
        if n_particles == 0 {
            return Err(Error::config("need at least one particle"));
        }
        Ok(Self {
            dt,
            t_horizon,
            burn_in,
            n_particles,
            seed,
            blow_up_radius: 1e8,
            max_atoms: 2_000_000,
        })
    }

    pub fn with_blow_up_radius(mut self, r: f64) -> Self {
        self.blow_up_radius = r;
        self
    }

    pub fn with_max_atoms(mut self, n: usize) -> Self {
        self.max_atoms = n.max(1);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::field::CoefficientField;
    use crate::coeff::parse::parse_coeff;
    use crate::measure::discrete::DiscreteMeasure;

    #[test]
    fn sde_config_invariants() {
        assert!(SdeConfig::new(1e-3, 10.0, 1.0, 100, 7).is_ok());
        assert!(SdeConfig::new(0.0, 10.0, 1.0, 100, 7).is_err());
        assert!(SdeConfig::new(1e-3, 10.0, 10.0, 100, 7).is_err());
        assert!(SdeConfig::new(0.2, 10.0, 1.0, 100, 7).is_err());
        assert!(SdeConfig::new(1e-3, 10.0, 1.0, 0, 7).is_err());
    }

    #[test]
    fn frozen_problem_checks_dimensions() {
        let field = CoefficientField::scalar(
            parse_coeff("1").unwrap().into(),
            parse_coeff("-x1").unwrap().into(),
            1,
        )
        .unwrap();
        let sigma2 =
            Measure::Discrete(DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap());
        let dom1 = Cube::symmetric(8.0, 1).unwrap();
        assert!(FrozenProblem::new(field.clone(), sigma2, dom1.clone()).is_err());
        let sigma1 = Measure::Discrete(DiscreteMeasure::dirac(&[0.0]).unwrap());
        let p = FrozenProblem::new(field, sigma1, dom1).unwrap();
        assert_eq!(p.boundary, Boundary::ZeroFlux);
    }
}
