//! Probabilists' Hermite polynomials `He_k` with exact derivatives.
//!
//! `He_0 = 1, He_1 = x, He_{k+1} = x He_k - k He_{k-1}`. Derivatives follow
//! from `He_k' = k He_{k-1}`, so values and both derivatives come from one
//! recurrence pass.

/// Value of `He_k(x)`.
pub fn hermite(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return 1.0;
    }
    for j in 1..k {
        let next = x * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `(He_k(x), He_k'(x), He_k''(x))`.
pub fn hermite_d2(k: usize, x: f64) -> (f64, f64, f64) {
    let v = hermite(k, x);
    let d1 = if k >= 1 { k as f64 * hermite(k - 1, x) } else { 0.0 };
    let d2 = if k >= 2 {
        (k * (k - 1)) as f64 * hermite(k - 2, x)
    } else {
        0.0
    };
    (v, d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_up_to_degree_four() {
        for &x in &[-2.5, -0.3, 0.0, 0.7, 3.1] {
            assert_eq!(hermite(0, x), 1.0);
            assert_eq!(hermite(1, x), x);
            assert!((hermite(2, x) - (x * x - 1.0)).abs() < 1e-12);
            assert!((hermite(3, x) - (x * x * x - 3.0 * x)).abs() < 1e-11);
            assert!((hermite(4, x) - (x * x * x * x - 6.0 * x * x + 3.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h1 = 1e-6;
        let h2 = 1e-4; // second differences need a larger step to beat roundoff
        for k in 0..=4 {
            for &x in &[-1.8, 0.4, 2.2] {
                let (_, d1, d2) = hermite_d2(k, x);
                let fd1 = (hermite(k, x + h1) - hermite(k, x - h1)) / (2.0 * h1);
                let fd2 =
                    (hermite(k, x + h2) - 2.0 * hermite(k, x) + hermite(k, x - h2)) / (h2 * h2);
                assert!((d1 - fd1).abs() < 1e-5, "He_{k}' at {x}");
                assert!((d2 - fd2).abs() < 1e-4, "He_{k}'' at {x}");
            }
        }
    }
}
