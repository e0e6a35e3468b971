//! Banded LU factorization with partial pivoting.
//!
//! Stationary finite-volume operators on tensor grids are banded (bandwidth =
//! one grid line), so a band factorization solves them in `O(n * bw^2)` time
//! and `O(n * bw)` memory. Storage follows the classic band layout: entry
//! `A(i, j)` lives at row `kl + ku + i - j` of an `(2 kl + ku + 1) x n`
//! array; the extra `kl` rows absorb pivoting fill-in.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    /// `(2*kl + ku + 1) x n`, row-major.
    ab: Vec<f64>,
}

impl BandedMatrix {
    pub fn zero(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        BandedMatrix {
            n,
            kl,
            ku,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let r = self.kl + self.ku + i - j;
        r * self.n + j
    }

    /// True when `(i, j)` lies inside the writable band (including fill-in
    /// rows, so pivoted factorizations stay in bounds).
    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.n && j < self.n && i + self.ku + self.kl >= j && j + self.kl >= i
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.ab[self.slot(i, j)]
        } else {
            0.0
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(
            self.in_band(i, j),
            "entry ({i}, {j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j);
        self.ab[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    /// Overwrite row `i` with zeros inside the band.
    pub fn clear_row(&mut self, i: usize) {
        let lo = i.saturating_sub(self.kl);
        let hi = (i + self.ku + self.kl).min(self.n - 1);
        for j in lo..=hi {
            if self.in_band(i, j) {
                let s = self.slot(i, j);
                self.ab[s] = 0.0;
            }
        }
    }

    /// LU-factorize in place with partial pivoting.
    pub fn factor(mut self) -> Result<BandedLu> {
        let n = self.n;
        let kl = self.kl;
        let ku = self.ku;
        let mut ipiv = vec![0usize; n];
        for j in 0..n {
            // Pivot search in column j, rows j..=j+kl.
            let imax = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.get(j, j).abs();
            for i in (j + 1)..=imax {
                let v = self.get(i, j).abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            ipiv[j] = p;
            if best == 0.0 {
                return Err(Error::LinearSolve(format!(
                    "singular band matrix: zero pivot in column {j}"
                )));
            }
            let jmax = (j + ku + kl).min(n - 1);
            if p != j {
                for k in j..=jmax {
                    let a = self.get(j, k);
                    let b = self.get(p, k);
                    self.set(j, k, b);
                    self.set(p, k, a);
                }
            }
            let pivot = self.get(j, j);
            for i in (j + 1)..=imax {
                let m = self.get(i, j) / pivot;
                self.set(i, j, m);
                if m != 0.0 {
                    for k in (j + 1)..=jmax {
                        let u = self.get(j, k);
                        if u != 0.0 {
                            self.add(i, k, -m * u);
                        }
                    }
                }
            }
        }
        Ok(BandedLu { mat: self, ipiv })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    mat: BandedMatrix,
    ipiv: Vec<usize>,
}

impl BandedLu {
    /// Solve `A x = b`, overwriting `b` with the solution.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.mat.n;
        let kl = self.mat.kl;
        let ku = self.mat.ku;
        assert_eq!(b.len(), n);
        // Forward: apply P and L.
        for j in 0..n {
            let p = self.ipiv[j];
            if p != j {
                b.swap(j, p);
            }
            let imax = (j + kl).min(n - 1);
            let bj = b[j];
            if bj != 0.0 {
                for i in (j + 1)..=imax {
                    b[i] -= self.mat.get(i, j) * bj;
                }
            }
        }
        // Backward: U x = y.
        for j in (0..n).rev() {
            let jmax = (j + ku + kl).min(n - 1);
            let mut acc = b[j];
            for k in (j + 1)..=jmax {
                acc -= self.mat.get(j, k) * b[k];
            }
            b[j] = acc / self.mat.get(j, j);
        }
    }
}
