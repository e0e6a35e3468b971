//! Conservative finite-volume solve of the stationary equation on a 1-D or
//! 2-D tensor grid with zero-flux boundaries. Face fluxes use the
//! exponential-fitting (Scharfetter–Gummel) discretization of
//! `J = ∂(aμ) − bμ`, written per direction as `J = a_f μ' − β μ` with the
//! effective advection `β = b − ∂a` and a harmonic-mean face diffusion, so
//! directions where the diffusion block vanishes reduce to pure upwind
//! transport automatically. The singular balance system is closed by
//! pinning one cell and renormalizing the null density to unit mass.

use crate::error::{Error, Result};
use crate::frozen::FrozenProblem;
use crate::measure::grid::{GridAxis, GridDensity};
use crate::util::banded::BandedMatrix;

/// Most negative density (relative to the maximum) tolerated before the
/// solve is reported as a positivity failure.
pub const POSITIVITY_TOL: f64 = -1e-10;
/// Diagonal diffusion entries below this are treated as exactly zero
/// (pure transport) on the adjoining faces.
const FACE_DIFFUSION_FLOOR: f64 = 1e-300;
/// Diagonal diffusion entries below this are a PSD violation.
const NEGATIVE_A_TOL: f64 = -1e-8;
/// Relative strength of the artificial face diffusion used to close
/// systems whose discrete null space has dimension greater than one.
const REGULARIZATION: f64 = 1e-12;

/// The Bernoulli weight `t / (e^t - 1)`, the exact per-interval flux
/// weight for constant-coefficient drift-diffusion. Stable for all `t`:
/// it decays to `0` for large positive `t` and grows like `|t|` for large
/// negative `t`.
fn bernoulli(t: f64) -> f64 {
    if t == 0.0 {
        1.0
    } else {
        t / t.exp_m1()
    }
}

pub fn solve_grid_fv(problem: &FrozenProblem, axes: &[GridAxis]) -> Result<GridDensity> {
    let d = problem.field.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension {
            op: "solve_grid_fv".into(),
            dim: d,
            detail: "the grid backend supports one or two dimensions; use solve_ergodic".into(),
        });
    }
    if axes.len() != d {
        return Err(Error::config(format!(
            "grid has {} axes but the field has dimension {d}",
            axes.len()
        )));
    }
    let bound = problem.field.bind(&problem.sigma)?;
    for i in 0..d {
        for j in 0..d {
            if i != j && bound.a_coeff(i, j).as_const() != Some(0.0) {
                return Err(Error::config(format!(
                    "the grid backend requires a diagonal diffusion matrix; \
                     a[{}][{}] is not identically zero",
                    i + 1,
                    j + 1
                )));
            }
        }
    }

    let dims: Vec<usize> = axes.iter().map(|a| a.cells).collect();
    let n: usize = dims.iter().product();
    // Row-major with the first axis slowest.
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }

    // Cell-center diagonal diffusion values, clamped at zero, with PSD
    // violations rejected.
    let mut centers = vec![0.0f64; d];
    let center_of = |idx: &[usize], out: &mut [f64]| {
        for k in 0..d {
            out[k] = axes[k].center(idx[k]);
        }
    };
    let mut a_diag = vec![vec![0.0f64; n]; d];
    let mut idx = vec![0usize; d];
    for c in 0..n {
        unravel(c, &dims, &mut idx);
        center_of(&idx, &mut centers);
        for k in 0..d {
            let v = bound.eval_a(k, k, &centers)?;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("diffusion entry a[{}][{}]", k + 1, k + 1),
                    point: centers.clone(),
                });
            }
            if v < NEGATIVE_A_TOL {
                return Err(Error::NotPsd {
                    x: centers.clone(),
                    eigmin: v,
                });
            }
            a_diag[k][c] = v.max(0.0);
        }
    }

    // Assemble the flux-balance rows: for each interior face (direction k,
    // cells L and R = L + stride) the flux J = cl*mu_L + cr*mu_R enters
    // row L as +J/h and row R as -J/h. `gamma` adds an artificial centered
    // diffusion used only by the regularized fallback (see below).
    let bw = *strides.iter().max().unwrap();
    let mut beta_scale = 0.0f64;
    let assemble = |gamma: f64, beta_scale: &mut f64| -> Result<BandedMatrix> {
        let mut mat = BandedMatrix::zero(n, bw, bw);
        let mut face = vec![0.0f64; d];
        let mut idx = vec![0usize; d];
        for c in 0..n {
            unravel(c, &dims, &mut idx);
            for k in 0..d {
                if idx[k] + 1 >= dims[k] {
                    continue;
                }
                let l = c;
                let r = c + strides[k];
                let h = axes[k].step();
                // Face center: midpoint between the two cell centers.
                center_of(&idx, &mut face);
                face[k] += 0.5 * h;
                let b_f = bound.eval_b(k, &face)?;
                if !b_f.is_finite() {
                    return Err(Error::NonFinite {
                        what: format!("drift entry b[{}]", k + 1),
                        point: face.clone(),
                    });
                }
                let (al, ar) = (a_diag[k][l], a_diag[k][r]);
                let af = if al > 0.0 && ar > 0.0 {
                    2.0 * al * ar / (al + ar)
                } else {
                    0.0
                };
                let beta = b_f - (ar - al) / h;
                *beta_scale = beta_scale.max(beta.abs()).max(af / h);
                let (mut cl, mut cr) = if af <= FACE_DIFFUSION_FLOOR {
                    // Pure upwind transport: physical velocity is +beta.
                    if beta > 0.0 {
                        (-beta, 0.0)
                    } else {
                        (0.0, -beta)
                    }
                } else {
                    let p = beta * h / af;
                    (-(af / h) * bernoulli(-p), (af / h) * bernoulli(p))
                };
                cl -= gamma;
                cr += gamma;
                mat.add(l, l, cl / h);
                mat.add(l, r, cr / h);
                mat.add(r, l, -cl / h);
                mat.add(r, r, -cr / h);
            }
        }
        Ok(mat)
    };
    let mat = assemble(0.0, &mut beta_scale)?;

    // The balance system is singular (cell volumes form a left null
    // vector); pin one cell at value 1, solve, then renormalize. If the
    // pinned cell happens to lie where the true density vanishes, fall
    // back to other pins.
    let vol: f64 = axes.iter().map(|a| a.step()).product();
    let center_cell = {
        let mid: Vec<usize> = dims.iter().map(|&m| m / 2).collect();
        ravel(&mid, &strides)
    };
    let candidates = [center_cell, n / 3, (2 * n) / 3, 0];
    let try_pins = |mat: &BandedMatrix| -> Result<GridDensity> {
        let mut last_err: Option<Error> = None;
        for &pin in &candidates {
            let mut sys = mat.clone();
            sys.clear_row(pin);
            sys.set(pin, pin, 1.0);
            let lu = match sys.factor() {
                Ok(lu) => lu,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let mut mu = vec![0.0f64; n];
            mu[pin] = 1.0;
            lu.solve_in_place(&mut mu);
            if mu.iter().any(|v| !v.is_finite()) {
                last_err = Some(Error::LinearSolve(
                    "non-finite entries in the null-density solve".into(),
                ));
                continue;
            }
            let mass: f64 = mu.iter().sum::<f64>() * vol;
            if !(mass > 0.0) {
                last_err = Some(Error::LinearSolve(format!(
                    "null density has non-positive mass {mass}"
                )));
                continue;
            }
            for v in mu.iter_mut() {
                *v /= mass;
            }
            let (mut worst_cell, mut worst) = (0usize, 0.0f64);
            for (i, &v) in mu.iter().enumerate() {
                if v < worst {
                    worst = v;
                    worst_cell = i;
                }
            }
            let peak = mu.iter().cloned().fold(0.0f64, f64::max);
            if worst < POSITIVITY_TOL * peak.max(1.0) {
                return Err(Error::PositivityLost {
                    cell: worst_cell,
                    value: worst,
                });
            }
            for v in mu.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let mass: f64 = mu.iter().sum::<f64>() * vol;
            for v in mu.iter_mut() {
                *v /= mass;
            }
            return GridDensity::new(axes.to_vec(), mu, true);
        }
        Err(last_err.unwrap_or_else(|| Error::LinearSolve("no usable pin cell".into())))
    };
    match try_pins(&mat) {
        Err(Error::LinearSolve(_)) => {
            // Pure-transport fields can leave cells whose density no flux
            // balance ever constrains (e.g. the two absorbing cells that
            // flank a stagnation face), so the null space has dimension
            // greater than one and every single-cell pin stays singular.
            // Retry once with a vanishing artificial diffusion on every
            // face; the perturbation sits far below discretization error
            // and selects the balanced stationary combination.
            let gamma = REGULARIZATION * beta_scale.max(1.0);
            let reg = assemble(gamma, &mut beta_scale)?;
            try_pins(&reg)
        }
        other => other,
    }
}

fn unravel(mut c: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = c % dims[k];
        c /= dims[k];
    }
}

fn ravel(idx: &[usize], strides: &[usize]) -> usize {
    idx.iter().zip(strides).map(|(i, s)| i * s).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::field::{CoeffEntry, CoefficientField};
    use crate::coeff::parse::parse_coeff;
    use crate::frozen::solve_1d_closed;
    use crate::measure::discrete::DiscreteMeasure;
    use crate::measure::ops::{l1_density_distance, moment};
    use crate::measure::{Measure, MomentKind};
    use crate::util::cube::Cube;

    fn entry(text: &str) -> CoeffEntry {
        parse_coeff(text).unwrap().into()
    }

    fn dirac0(d: usize) -> Measure {
        Measure::Discrete(DiscreteMeasure::dirac(&vec![0.0; d]).unwrap())
    }

    #[test]
    fn bernoulli_weight_limits() {
        assert_eq!(bernoulli(0.0), 1.0);
        assert!((bernoulli(1e-12) - 1.0).abs() < 1e-9);
        assert!((bernoulli(-900.0) - 900.0).abs() < 1e-9);
        assert_eq!(bernoulli(900.0), 0.0);
        assert!((bernoulli(1.0) - 1.0 / 1.0f64.exp_m1()).abs() < 1e-15);
    }

    #[test]
    fn ou_grid_matches_closed_form_within_a_thousandth() {
        let field = CoefficientField::scalar(entry("1"), entry("-x1"), 1).unwrap();
        let p = FrozenProblem::new(field, dirac0(1), Cube::symmetric(8.0, 1).unwrap()).unwrap();
        let axis = GridAxis::new(-8.0, 8.0, 400).unwrap();
        let g = solve_grid_fv(&p, &[axis.clone()]).unwrap();
        let c = solve_1d_closed(&p, &axis).unwrap();
        let l1 = l1_density_distance(&Measure::Grid(g.clone()), &Measure::Grid(c), &[axis])
            .unwrap();
        assert!(l1 < 1e-3, "L1 distance {l1}");
        let m2 = moment(&Measure::Grid(g), 2.0, MomentKind::Component(0)).unwrap();
        assert!((m2 - 1.0).abs() < 1e-3, "second moment {m2}");
    }

    #[test]
    fn grid_mass_is_exactly_normalized_and_nonnegative() {
        let field = CoefficientField::scalar(entry("1"), entry("-x1^3"), 1).unwrap();
        let p = FrozenProblem::new(field, dirac0(1), Cube::symmetric(5.0, 1).unwrap()).unwrap();
        let axis = GridAxis::new(-5.0, 5.0, 317).unwrap();
        let g = solve_grid_fv(&p, &[axis]).unwrap();
        assert!((g.mass() - 1.0).abs() < 1e-12);
        assert!(g.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn two_dimensional_decoupled_drift_gives_product_gaussian() {
        let field = CoefficientField::new(
            2,
            2,
            vec![entry("1"), entry("0"), entry("0"), entry("1")],
            vec![entry("-x1"), entry("-x2")],
        )
        .unwrap();
        let p = FrozenProblem::new(field, dirac0(2), Cube::symmetric(6.0, 2).unwrap()).unwrap();
        let axes = vec![
            GridAxis::new(-6.0, 6.0, 96).unwrap(),
            GridAxis::new(-6.0, 6.0, 96).unwrap(),
        ];
        let g = solve_grid_fv(&p, &axes).unwrap();
        let mu = Measure::Grid(g);
        let v1 = moment(&mu, 2.0, MomentKind::Component(0)).unwrap();
        let v2 = moment(&mu, 2.0, MomentKind::Component(1)).unwrap();
        assert!((v1 - 1.0).abs() < 0.01, "var x1 = {v1}");
        assert!((v2 - 1.0).abs() < 0.01, "var x2 = {v2}");
        let cross = mu.integrate(|x| x[0] * x[1]);
        assert!(cross.abs() < 1e-10, "cross moment {cross}");
    }

    #[test]
    fn zero_drift_identity_diffusion_is_uniform() {
        let field = CoefficientField::new(
            2,
            2,
            vec![entry("1"), entry("0"), entry("0"), entry("1")],
            vec![entry("0"), entry("0")],
        )
        .unwrap();
        let p = FrozenProblem::new(field, dirac0(2), Cube::symmetric(1.0, 2).unwrap()).unwrap();
        let axes = vec![
            GridAxis::new(-1.0, 1.0, 16).unwrap(),
            GridAxis::new(-1.0, 1.0, 16).unwrap(),
        ];
        let g = solve_grid_fv(&p, &axes).unwrap();
        for &v in g.values() {
            assert!((v - 0.25).abs() < 1e-12, "value {v}");
        }
    }

    #[test]
    fn degenerate_direction_concentrates_by_upwind_transport() {
        // No diffusion at all, drift pulls toward the origin: the discrete
        // stationary density concentrates on the cells adjacent to zero.
        let field = CoefficientField::scalar(entry("0"), entry("-x1"), 0).unwrap();
        let p = FrozenProblem::new(field, dirac0(1), Cube::symmetric(2.0, 1).unwrap()).unwrap();
        let axis = GridAxis::new(-2.0, 2.0, 64).unwrap();
        let g = solve_grid_fv(&p, &[axis]).unwrap();
        let mu = Measure::Grid(g);
        let m2 = moment(&mu, 2.0, MomentKind::Component(0)).unwrap();
        assert!(m2 < 0.01, "second moment {m2}");
    }

    #[test]
    fn off_diagonal_diffusion_is_rejected() {
        let field = CoefficientField::new(
            2,
            2,
            vec![entry("1"), entry("0.5"), entry("0.5"), entry("1")],
            vec![entry("-x1"), entry("-x2")],
        )
        .unwrap();
        let p = FrozenProblem::new(field, dirac0(2), Cube::symmetric(2.0, 2).unwrap()).unwrap();
        let axes = vec![
            GridAxis::new(-2.0, 2.0, 8).unwrap(),
            GridAxis::new(-2.0, 2.0, 8).unwrap(),
        ];
        let err = solve_grid_fv(&p, &axes).unwrap_err();
        assert!(err.to_string().contains("diagonal"));
    }

    #[test]
    fn three_dimensions_are_refused() {
        let field = CoefficientField::new(
            3,
            3,
            vec![
                entry("1"), entry("0"), entry("0"),
                entry("0"), entry("1"), entry("0"),
                entry("0"), entry("0"), entry("1"),
            ],
            vec![entry("-x1"), entry("-x2"), entry("-x3")],
        )
        .unwrap();
        let p = FrozenProblem::new(field, dirac0(3), Cube::symmetric(2.0, 3).unwrap()).unwrap();
        let axes = vec![
            GridAxis::new(-2.0, 2.0, 4).unwrap(),
            GridAxis::new(-2.0, 2.0, 4).unwrap(),
            GridAxis::new(-2.0, 2.0, 4).unwrap(),
        ];
        assert!(matches!(
            solve_grid_fv(&p, &axes),
            Err(Error::UnsupportedDimension { .. })
        ));
    }
}
