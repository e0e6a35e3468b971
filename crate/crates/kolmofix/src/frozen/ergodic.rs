//! Long-run trajectory averaging: Euler–Maruyama simulation of
//! `dX = b(X) dt + sqrt(2 A(X)) dW` with the frozen coefficients, returning
//! the time-averaged empirical measure over `[burn_in, T]` across all
//! particles. Each particle owns a counter-derived random stream, so the
//! result is bit-reproducible for a fixed seed regardless of how the
//! particle loop is scheduled.

use crate::coeff::bind::BoundCoeff;
use crate::coeff::field::BoundField;
use crate::error::{Error, Result};
use crate::frozen::{FrozenProblem, SdeConfig};
use crate::measure::discrete::DiscreteMeasure;
use crate::util::linalg::{min_eigenvalue, psd_sqrt};
use crate::util::rng::stream_rng;
use crate::util::sum::pairwise_sum_fn;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

/// Eigenvalues of the diffusion matrix below this are a PSD violation;
/// anything in `[NEGATIVE_A_TOL, 0)` is clamped to zero.
const NEGATIVE_A_TOL: f64 = -1e-8;

/// Moment summaries of the simulated ensemble. Standard errors are across
/// particles (each particle's time average is one sample), zero when only
/// one particle was run.
#[derive(Clone, Debug, Serialize)]
pub struct ErgodicStats {
    /// Time-averaged mean, length d.
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    /// Time-averaged second moments `E[x_i x_j]`, row-major `d x d`.
    pub second: Vec<f64>,
    pub second_se: Vec<f64>,
    pub n_particles: usize,
    /// Atoms in the returned measure after time-thinning.
    pub recorded_atoms: usize,
    /// Every `thin_stride`-th post-burn-in state is recorded.
    pub thin_stride: usize,
}

enum Noise {
    /// Precomputed `sqrt(2A)` for a state-independent diffusion matrix.
    ConstMatrix(Vec<f64>),
    /// One-dimensional state-dependent diffusion.
    Scalar1d,
    /// Diagonal state-dependent diffusion (all off-diagonal entries are
    /// identically zero).
    Diagonal,
    /// Full matrix square root at every step.
    General,
}

pub fn solve_ergodic(problem: &FrozenProblem, cfg: &SdeConfig) -> Result<DiscreteMeasure> {
    solve_ergodic_with_stats(problem, cfg).map(|(mu, _)| mu)
}

pub fn solve_ergodic_with_stats(
    problem: &FrozenProblem,
    cfg: &SdeConfig,
) -> Result<(DiscreteMeasure, ErgodicStats)> {
    let d = problem.field.dim();
    let bound = problem.field.bind(&problem.sigma)?;
    let steps = (cfg.t_horizon / cfg.dt).round().max(1.0) as usize;
    let burn_steps = ((cfg.burn_in / cfg.dt).round() as usize).min(steps - 1);
    let avg_steps = steps - burn_steps;
    let thin = ((cfg.n_particles as u64 * avg_steps as u64) / cfg.max_atoms as u64 + 1) as usize;

    let start: Vec<f64> = problem
        .domain
        .lo
        .iter()
        .zip(&problem.domain.hi)
        .map(|(l, h)| 0.5 * (l + h))
        .collect();

    let noise = match bound.const_a() {
        Some(a) => {
            let eigmin = min_eigenvalue(&a, d);
            if eigmin < NEGATIVE_A_TOL {
                return Err(Error::NotPsd {
                    x: start.clone(),
                    eigmin,
                });
            }
            let two_a: Vec<f64> = a.iter().map(|v| 2.0 * v).collect();
            Noise::ConstMatrix(psd_sqrt(&two_a, d))
        }
        None if d == 1 => Noise::Scalar1d,
        None => {
            let diagonal = (0..d).all(|i| {
                (0..d).all(|j| i == j || bound.a_coeff(i, j).as_const() == Some(0.0))
            });
            if diagonal {
                Noise::Diagonal
            } else {
                Noise::General
            }
        }
    };

    // One independent simulation per particle, collected in index order.
    let outs: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_particles)
        .into_par_iter()
        .map(|p| {
            if d == 1 {
                run_particle_1d(&bound, &noise, cfg, p, start[0], burn_steps, steps, thin)
            } else {
                run_particle_nd(&bound, &noise, cfg, p, &start, burn_steps, steps, thin)
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let n_stats = d + d * d;
    let np = cfg.n_particles;
    let mut mean = vec![0.0f64; d];
    let mut mean_se = vec![0.0f64; d];
    let mut second = vec![0.0f64; d * d];
    let mut second_se = vec![0.0f64; d * d];
    for s in 0..n_stats {
        let avg = pairwise_sum_fn(np, &mut |p| outs[p].1[s]) / np as f64;
        let var = if np >= 2 {
            pairwise_sum_fn(np, &mut |p| {
                let e = outs[p].1[s] - avg;
                e * e
            }) / ((np - 1) as f64)
        } else {
            0.0
        };
        let se = (var / np as f64).sqrt();
        if s < d {
            mean[s] = avg;
            mean_se[s] = se;
        } else {
            second[s - d] = avg;
            second_se[s - d] = se;
        }
    }

    let total_atoms: usize = outs.iter().map(|o| o.0.len() / d).sum();
    let mut points = Vec::with_capacity(total_atoms * d);
    for o in &outs {
        points.extend_from_slice(&o.0);
    }
    let measure = DiscreteMeasure::from_samples(d, points)?;
    let stats = ErgodicStats {
        mean,
        mean_se,
        second,
        second_se,
        n_particles: np,
        recorded_atoms: total_atoms,
        thin_stride: thin,
    };
    Ok((measure, stats))
}

/// Tight scalar loop for one-dimensional problems; drift and diffusion are
/// dispatched once, outside the time loop.
#[allow(clippy::too_many_arguments)]
fn run_particle_1d(
    bound: &BoundField,
    noise: &Noise,
    cfg: &SdeConfig,
    particle: usize,
    start: f64,
    burn_steps: usize,
    steps: usize,
    thin: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    enum Drift1 {
        Const(f64),
        Affine(f64, f64),
        General,
    }
    let drift = match bound.b_coeff(0) {
        BoundCoeff::Const(c) => Drift1::Const(*c),
        BoundCoeff::Affine { c0, lin } => Drift1::Affine(*c0, lin[0]),
        _ => Drift1::General,
    };
    let const_s = match noise {
        Noise::ConstMatrix(s) => Some(s[0]),
        _ => None,
    };
    let mut rng = stream_rng(cfg.seed, particle as u64);
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let guard = cfg.blow_up_radius;
    let mut x = start;
    let mut m1 = 0.0f64;
    let mut m2 = 0.0f64;
    let mut positions = Vec::with_capacity((steps - burn_steps) / thin + 1);
    for step in 0..steps {
        let b = match drift {
            Drift1::Const(c) => c,
            Drift1::Affine(c0, k) => c0 + k * x,
            Drift1::General => bound.eval_b(0, std::slice::from_ref(&x))?,
        };
        let s = match const_s {
            Some(s) => s,
            None => {
                let a = bound.eval_a(0, 0, std::slice::from_ref(&x))?;
                if a < NEGATIVE_A_TOL {
                    return Err(Error::NotPsd {
                        x: vec![x],
                        eigmin: a,
                    });
                }
                (2.0 * a.max(0.0)).sqrt()
            }
        };
        let z: f64 = rng.sample(StandardNormal);
        x += b * dt + s * z * sqrt_dt;
        if !(x.abs() <= guard) {
            return Err(Error::BlowUp {
                particle,
                time: (step + 1) as f64 * dt,
            });
        }
        if step >= burn_steps {
            m1 += x;
            m2 += x * x;
            if (step - burn_steps) % thin == 0 {
                positions.push(x);
            }
        }
    }
    let inv = 1.0 / (steps - burn_steps) as f64;
    Ok((positions, vec![m1 * inv, m2 * inv]))
}

#[allow(clippy::too_many_arguments)]
fn run_particle_nd(
    bound: &BoundField,
    noise: &Noise,
    cfg: &SdeConfig,
    particle: usize,
    start: &[f64],
    burn_steps: usize,
    steps: usize,
    thin: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = bound.dim();
    let mut rng = stream_rng(cfg.seed, particle as u64);
    let dt = cfg.dt;
    let sqrt_dt = dt.sqrt();
    let guard2 = cfg.blow_up_radius * cfg.blow_up_radius;
    let mut x = start.to_vec();
    let mut bvec = vec![0.0f64; d];
    let mut z = vec![0.0f64; d];
    let mut amat = vec![0.0f64; d * d];
    let mut stats = vec![0.0f64; d + d * d];
    let mut positions = Vec::with_capacity(d * ((steps - burn_steps) / thin + 1));
    for step in 0..steps {
        bound.b_vector(&x, &mut bvec)?;
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        match noise {
            Noise::ConstMatrix(s) => {
                for i in 0..d {
                    let mut dx = bvec[i] * dt;
                    for j in 0..d {
                        dx += s[i * d + j] * z[j] * sqrt_dt;
                    }
                    x[i] += dx;
                }
            }
            Noise::Diagonal => {
                for i in 0..d {
                    let a = bound.eval_a(i, i, &x)?;
                    if a < NEGATIVE_A_TOL {
                        return Err(Error::NotPsd {
                            x: x.clone(),
                            eigmin: a,
                        });
                    }
                    bvec[i] = bvec[i] * dt + (2.0 * a.max(0.0)).sqrt() * z[i] * sqrt_dt;
                }
                for i in 0..d {
                    x[i] += bvec[i];
                }
            }
            Noise::General | Noise::Scalar1d => {
                bound.a_matrix(&x, &mut amat)?;
                let eigmin = min_eigenvalue(&amat, d);
                if eigmin < NEGATIVE_A_TOL {
                    return Err(Error::NotPsd {
                        x: x.clone(),
                        eigmin,
                    });
                }
                for v in amat.iter_mut() {
                    *v *= 2.0;
                }
                let s = psd_sqrt(&amat, d);
                for i in 0..d {
                    let mut dx = bvec[i] * dt;
                    for j in 0..d {
                        dx += s[i * d + j] * z[j] * sqrt_dt;
                    }
                    x[i] += dx;
                }
            }
        }
        let r2: f64 = x.iter().map(|v| v * v).sum();
        if !(r2 <= guard2) {
            return Err(Error::BlowUp {
                particle,
                time: (step + 1) as f64 * dt,
            });
        }
        if step >= burn_steps {
            for i in 0..d {
                stats[i] += x[i];
                for j in 0..d {
                    stats[d + i * d + j] += x[i] * x[j];
                }
            }
            if (step - burn_steps) % thin == 0 {
                positions.extend_from_slice(&x);
            }
        }
    }
    let inv = 1.0 / (steps - burn_steps) as f64;
    for s in stats.iter_mut() {
        *s *= inv;
    }
    Ok((positions, stats))
}
