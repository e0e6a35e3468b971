//! Weighted atom clouds.

use crate::error::{Error, Result};
use crate::util::sum::{pairwise_sum, pairwise_sum_fn};
use rand::Rng;

/// Tolerance on `|mass - 1|` for measures flagged as probabilities.
pub const PROBABILITY_MASS_TOL: f64 = 1e-12;
/// Slack allowed above unit mass for sub-probability measures (rounding).
pub const SUBPROBABILITY_MASS_SLACK: f64 = 1e-12;

/// A finite nonnegative measure given by weighted atoms.
///
/// Atoms are first-class: weights may concentrate on single points, and all
/// integral functionals are computed by deterministic pairwise summation over
/// the stored atom order.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    dim: usize,
    /// `n x dim`, row-major.
    points: Vec<f64>,
    weights: Vec<f64>,
    probability: bool,
}

impl DiscreteMeasure {
    fn validate(dim: usize, points: &[f64], weights: &[f64], probability: bool) -> Result<f64> {
        if dim == 0 {
            return Err(Error::config("measure dimension must be positive"));
        }
        if points.len() != weights.len() * dim {
            return Err(Error::config(format!(
                "points buffer has {} coordinates but {} weights x dim {} requires {}",
                points.len(),
                weights.len(),
                dim,
                weights.len() * dim
            )));
        }
        if weights.is_empty() {
            return Err(Error::config("measure needs at least one atom"));
        }
        for (k, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::config(format!(
                    "weight {k} is {w}; weights must be finite and nonnegative"
                )));
            }
        }
        if let Some(bad) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::config(format!(
                "atom {} has non-finite coordinate",
                bad / dim
            )));
        }
        let mass = pairwise_sum(weights);
        if probability {
            if (mass - 1.0).abs() > PROBABILITY_MASS_TOL {
                return Err(Error::config(format!(
                    "probability measure has mass {mass}; |mass - 1| must be <= {PROBABILITY_MASS_TOL:e}"
                )));
            }
        } else if !(mass > 0.0) || mass > 1.0 + SUBPROBABILITY_MASS_SLACK {
            return Err(Error::config(format!(
                "sub-probability measure must have mass in (0, 1], got {mass}"
            )));
        }
        Ok(mass)
    }

    /// A probability measure (`|mass - 1| <= 1e-12` enforced, never silently
    /// renormalized).
    pub fn probability(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::validate(dim, &points, &weights, true)?;
        Ok(DiscreteMeasure {
            dim,
            points,
            weights,
            probability: true,
        })
    }

    /// A measure with mass in `(0, 1]`.
    pub fn sub_probability(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let mass = Self::validate(dim, &points, &weights, false)?;
        Ok(DiscreteMeasure {
            dim,
            points,
            weights,
            probability: (mass - 1.0).abs() <= PROBABILITY_MASS_TOL,
        })
    }

    /// Equal-weight cloud from raw sample coordinates (`n x dim`).
    pub fn from_samples(dim: usize, points: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() % dim != 0 || points.is_empty() {
            return Err(Error::config(
                "sample buffer length must be a positive multiple of dim",
            ));
        }
        let n = points.len() / dim;
        let w = 1.0 / n as f64;
        Self::probability(dim, points, vec![w; n])
    }

    /// Unit point mass at `x`.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::probability(x.len(), x.to_vec(), vec![1.0])
    }

    /// Convex mixture `sum_k c_k mu_k`. Coefficients must be nonnegative; the
    /// result is a probability measure when the inputs are probabilities and
    /// the coefficients sum to 1 (within rounding).
    pub fn mix(parts: &[(f64, &DiscreteMeasure)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::config("mixture needs at least one component"));
        }
        let dim = parts[0].1.dim;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (c, m) in parts {
            if *c < 0.0 {
                return Err(Error::config("mixture coefficients must be nonnegative"));
            }
            if m.dim != dim {
                return Err(Error::config("mixture components must share dimension"));
            }
            points.extend_from_slice(&m.points);
            weights.extend(m.weights.iter().map(|w| c * w));
        }
        Self::sub_probability(dim, points, weights)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_atoms(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn is_probability(&self) -> bool {
        self.probability
    }

    pub fn mass(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Deterministic pairwise integral `sum_k w_k f(x_k)`.
    pub fn integrate(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        pairwise_sum_fn(self.n_atoms(), &mut |k| self.weights[k] * f(self.point(k)))
    }

    /// One-dimensional marginal along coordinate `i` (weights unchanged).
    pub fn marginal(&self, i: usize) -> Result<DiscreteMeasure> {
        if i >= self.dim {
            return Err(Error::config(format!(
                "marginal coordinate {i} out of range for dimension {}",
                self.dim
            )));
        }
        let pts: Vec<f64> = (0..self.n_atoms()).map(|k| self.point(k)[i]).collect();
        Ok(DiscreteMeasure {
            dim: 1,
            points: pts,
            weights: self.weights.clone(),
            probability: self.probability,
        })
    }

    /// Draw `n` positions (systematic resampling); used to initialize
    /// trajectory ensembles from a current iterate.
    pub fn sample_positions(&self, n: usize, rng: &mut impl Rng) -> Vec<f64> {
        let mass = self.mass();
        let step = mass / n as f64;
        let start: f64 = rng.random_range(0.0..1.0) * step;
        let mut out = Vec::with_capacity(n * self.dim);
        let mut cum = 0.0;
        let mut k = 0usize;
        for i in 0..n {
            let target = start + i as f64 * step;
            while k + 1 < self.n_atoms() && cum + self.weights[k] < target {
                cum += self.weights[k];
                k += 1;
            }
            out.extend_from_slice(self.point(k));
        }
        out
    }

    /// Reduce the support to at most `max_atoms` by seeded systematic
    /// resampling into an equal-weight cloud. Identity when already small.
    pub fn compressed(&self, max_atoms: usize, rng: &mut impl Rng) -> Result<DiscreteMeasure> {
        if self.n_atoms() <= max_atoms {
            return Ok(self.clone());
        }
        let pts = self.sample_positions(max_atoms, rng);
        let mass = self.mass();
        let w = mass / max_atoms as f64;
        DiscreteMeasure::sub_probability(self.dim, pts, vec![w; max_atoms])
    }
}
