//! Small dense symmetric eigenproblems and PSD square roots.
//!
//! Diffusion matrices here are tiny (the state dimension), so a cyclic Jacobi
//! sweep is accurate, allocation-light, and plenty fast.

/// Eigen-decomposition of a symmetric `d x d` matrix (row-major).
///
/// Returns `(eigenvalues, eigenvectors)`, eigenvectors stored column-wise in
/// a row-major `d x d` buffer: column `k` is the eigenvector of
/// `eigenvalues[k]`. Eigenvalues are sorted ascending.
pub fn sym_eigen(a: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), d * d);
    let mut m = a.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    // Cyclic Jacobi rotations.
    for _sweep in 0..64 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += m[p * d + q] * m[p * d + q];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + frobenius(&m, d)) {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[k * d + p];
                    let mkq = m[k * d + q];
                    m[k * d + p] = c * mkp - s * mkq;
                    m[k * d + q] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[p * d + k];
                    let mqk = m[q * d + k];
                    m[p * d + k] = c * mpk - s * mqk;
                    m[q * d + k] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..d).map(|i| m[i * d + i]).collect();
    // Sort ascending, permuting eigenvector columns alongside.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig[i].total_cmp(&eig[j]));
    let eig_sorted: Vec<f64> = order.iter().map(|&i| eig[i]).collect();
    let mut v_sorted = vec![0.0; d * d];
    for (new_col, &old_col) in order.iter().enumerate() {
        for k in 0..d {
            v_sorted[k * d + new_col] = v[k * d + old_col];
        }
    }
    eig = eig_sorted;
    (eig, v_sorted)
}

fn frobenius(m: &[f64], d: usize) -> f64 {
    m.iter().take(d * d).map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &[f64], d: usize) -> f64 {
    if d == 1 {
        return a[0];
    }
    if d == 2 {
        // Closed form for the 2x2 case keeps hot paths cheap.
        let tr = a[0] + a[3];
        let det = a[0] * a[3] - a[1] * a[2];
        let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
        return tr / 2.0 - disc;
    }
    sym_eigen(a, d).0[0]
}

/// Square root of the PSD part: eigenvalues below zero are clamped to zero,
/// and `sqrt` is taken on the clamped spectrum. Returns a row-major `d x d`
/// matrix `S` with `S S^T = A_clamped`.
pub fn psd_sqrt(a: &[f64], d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![a[0].max(0.0).sqrt()];
    }
    let (eig, v) = sym_eigen(a, d);
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += v[i * d + k] * eig[k].max(0.0).sqrt() * v[j * d + k];
            }
            out[i * d + j] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_eigenvalues_match_closed_form() {
        let a = [2.0, 1.0, 1.0, 3.0];
        let (eig, v) = sym_eigen(&a, 2);
        let expect_lo = 2.5 - (1.25f64).sqrt();
        let expect_hi = 2.5 + (1.25f64).sqrt();
        assert!((eig[0] - expect_lo).abs() < 1e-12);
        assert!((eig[1] - expect_hi).abs() < 1e-12);
        assert!((min_eigenvalue(&a, 2) - expect_lo).abs() < 1e-12);
        // Check A v = lambda v for column 0.
        let (v0, v1) = (v[0], v[2]);
        assert!((a[0] * v0 + a[1] * v1 - eig[0] * v0).abs() < 1e-10);
        assert!((a[2] * v0 + a[3] * v1 - eig[0] * v1).abs() < 1e-10);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = [4.0, 2.0, 1.0, 2.0, 3.0, 0.5, 1.0, 0.5, 2.0];
        let s = psd_sqrt(&a, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += s[i * 3 + k] * s[j * 3 + k];
                }
                assert!((acc - a[i * 3 + j]).abs() < 1e-9, "({i},{j})");
            }
        }
    }

    #[test]
    fn negative_eigenvalues_are_clamped() {
        // diag(1, -1) -> sqrt should be diag(1, 0).
        let a = [1.0, 0.0, 0.0, -1.0];
        let s = psd_sqrt(&a, 2);
        assert!((s[0] - 1.0).abs() < 1e-12);
        assert!(s[3].abs() < 1e-12);
        assert!(s[1].abs() < 1e-12 && s[2].abs() < 1e-12);
    }

    #[test]
    fn degenerate_kinetic_matrix_sqrt() {
        // diag(1, 0): the degenerate direction stays exactly zero.
        let a = [1.0, 0.0, 0.0, 0.0];
        let s = psd_sqrt(&a, 2);
        assert_eq!(s[3], 0.0);
        assert!((s[0] - 1.0).abs() < 1e-14);
    }
}
