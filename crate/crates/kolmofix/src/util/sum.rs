//! Deterministic pairwise summation.
//!
//! All statistics reported by this crate are reductions over indexed slices.
//! Summing pairwise over a fixed recursion tree keeps the rounding pattern a
//! pure function of the slice contents, so results do not depend on thread
//! count or chunk scheduling, and the error constant grows like `log2 n`
//! instead of `n`.

/// Below this length a simple sequential loop is used.
const PAIRWISE_BASE: usize = 32;

/// Pairwise sum of a slice.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BASE {
        let mut acc = 0.0;
        for &x in xs {
            acc += x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Pairwise sum of `f(i)` for `i` in `0..n` without materializing the terms.
///
/// The recursion tree depends only on `n`, so the result is a pure function
/// of `(n, f)`.
pub fn pairwise_sum_fn(n: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &mut impl FnMut(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BASE {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..17).map(|i| i as f64 * 0.25).collect();
        let naive: f64 = xs.iter().sum();
        assert_eq!(pairwise_sum(&xs), naive);
    }

    #[test]
    fn sum_fn_agrees_with_slice_sum() {
        let xs: Vec<f64> = (0..1000u64).map(|i| ((i * 2654435761) % 997) as f64 / 997.0).collect();
        let a = pairwise_sum(&xs);
        let b = pairwise_sum_fn(xs.len(), &mut |i| xs[i]);
        assert_eq!(a, b);
    }

    #[test]
    fn more_accurate_than_sequential_on_adversarial_input() {
        // 1 followed by many tiny values: sequential summation loses them.
        let mut xs = vec![1.0f64];
        xs.extend(std::iter::repeat(1e-16).take(1 << 20));
        let pair = pairwise_sum(&xs);
        let expect = 1.0 + 1e-16 * (1u64 << 20) as f64;
        assert!((pair - expect).abs() < 1e-12, "pairwise {pair} vs {expect}");
    }
}
