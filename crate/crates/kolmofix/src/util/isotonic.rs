//! Isotonic (monotone non-decreasing) least-squares fit via pool-adjacent-
//! violators, used to turn noisy per-bin maxima into a monotone modulus
//! envelope.

/// Weighted non-decreasing fit of `ys`; returns the fitted sequence.
///
/// `ws` are strictly positive weights (bin occupancy counts work well).
pub fn isotonic_non_decreasing(ys: &[f64], ws: &[f64]) -> Vec<f64> {
    assert_eq!(ys.len(), ws.len());
    let n = ys.len();
    // Blocks of pooled values: (mean, weight, count).
    let mut mean = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let mut count = Vec::with_capacity(n);
    for i in 0..n {
        mean.push(ys[i]);
        weight.push(ws[i]);
        count.push(1usize);
        // Merge while the monotonicity constraint is violated.
        while mean.len() >= 2 {
            let m = mean.len();
            if mean[m - 2] <= mean[m - 1] {
                break;
            }
            let w = weight[m - 2] + weight[m - 1];
            let v = (mean[m - 2] * weight[m - 2] + mean[m - 1] * weight[m - 1]) / w;
            mean.truncate(m - 1);
            weight.truncate(m - 1);
            let c = count.pop().unwrap();
            *mean.last_mut().unwrap() = v;
            *weight.last_mut().unwrap() = w;
            *count.last_mut().unwrap() += c;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (b, &c) in count.iter().enumerate() {
        for _ in 0..c {
            out.push(mean[b]);
        }
    }
    out
}
