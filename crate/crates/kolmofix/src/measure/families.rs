//! Seeded generators of measure families used by the hypothesis checkers:
//! random compactly supported atom clouds, point masses along coordinate
//! rays, and empirical samples of a standard Gaussian.

use crate::error::Result;
use crate::measure::discrete::DiscreteMeasure;
use crate::util::cube::Cube;
use crate::util::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Largest atom count per random cloud.
pub const MAX_CLOUD_ATOMS: usize = 16;

/// `count` random probability clouds, each with 1..=16 atoms placed
/// uniformly in `cube` and uniform-random weights normalized to mass one.
pub fn random_clouds(cube: &Cube, count: usize, seed: u64) -> Result<Vec<DiscreteMeasure>> {
    let d = cube.dim();
    let mut out = Vec::with_capacity(count);
    for c in 0..count {
        let mut rng = stream_rng(seed, c as u64);
        let n = rng.random_range(1..=MAX_CLOUD_ATOMS);
        let mut pts = Vec::with_capacity(n * d);
        let mut ws = Vec::with_capacity(n);
        for _ in 0..n {
            for j in 0..d {
                pts.push(rng.random_range(cube.lo[j]..=cube.hi[j]));
            }
            // Bounded away from zero so no atom is degenerate by chance.
            ws.push(rng.random_range(0.1..1.0));
        }
        let total: f64 = ws.iter().sum();
        for w in &mut ws {
            *w /= total;
        }
        // Renormalization leaves a last-bit mass defect; absorb it exactly.
        let defect = 1.0 - ws.iter().sum::<f64>();
        ws[0] += defect;
        out.push(DiscreteMeasure::probability(d, pts, ws)?);
    }
    Ok(out)
}

/// Point masses δ_{r·e_i} for every axis, both signs, at each radius in
/// `radii`, plus the origin mass δ₀. Separates candidate drift gauges that
/// random bounded clouds cannot distinguish.
pub fn delta_rays(dim: usize, radii: &[f64]) -> Result<Vec<DiscreteMeasure>> {
    let mut out = vec![DiscreteMeasure::dirac(&vec![0.0; dim])?];
    for &r in radii {
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut x = vec![0.0; dim];
                x[i] = sign * r;
                out.push(DiscreteMeasure::dirac(&x)?);
            }
        }
    }
    Ok(out)
}

/// Default family for integral-condition checks: 100 seeded clouds in
/// [-3,3]^d augmented with point masses out to radius 8 (the rays catch
/// violations that only appear for mass far from the origin).
pub fn default_check_family(dim: usize, seed: u64) -> Result<Vec<DiscreteMeasure>> {
    let cube = Cube::symmetric(3.0, dim)?;
    let mut fam = random_clouds(&cube, 100, seed)?;
    fam.extend(delta_rays(dim, &[0.5, 1.0, 2.0, 4.0, 8.0])?);
    Ok(fam)
}

/// Empirical measure of `n` i.i.d. standard-Gaussian samples in `dim`
/// dimensions, all weights 1/n.
pub fn gaussian_sample(dim: usize, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    let mut rng = stream_rng(seed, u64::MAX);
    let mut pts = Vec::with_capacity(n * dim);
    for _ in 0..(n * dim) {
        pts.push(<StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng));
    }
    DiscreteMeasure::from_samples(dim, pts)
}
