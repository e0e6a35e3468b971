//! Smooth cutoffs and bump profiles.
//!
//! Two flavors are provided:
//!
//! * the `C^2` quintic plateau profile, shared by truncation cutoffs (values
//!   only) and by compactly supported test functions for weak-form residuals
//!   (with exact first and second derivatives), and
//! * an infinitely smooth scalar step (`exp(-1/t)` glue) for callers that
//!   want a transition with all derivatives vanishing at the seams.

/// Infinitely smooth step: 0 for `t <= 0`, 1 for `t >= 1`, strictly monotone
/// in between (`exp(-1/t)` glue).
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let f = (-1.0 / t).exp();
        let g = (-1.0 / (1.0 - t)).exp();
        f / (f + g)
    }
}

/// Radial cutoff equal to 1 on `|x| <= r_one` and 0 on `|x| >= r_zero`,
/// with the C^2 quintic transition in between. The same profile is used
/// wherever a plateau cutoff appears (here, [`PlateauBump`], and the
/// expression-tree taper of localized operators), so the variants agree
/// exactly.
pub fn radial_cutoff(x: &[f64], r_one: f64, r_zero: f64) -> f64 {
    debug_assert!(r_one < r_zero);
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r <= r_one {
        return 1.0;
    }
    if r >= r_zero {
        return 0.0;
    }
    1.0 - quintic((r - r_one) / (r_zero - r_one)).0
}

/// Quintic smoothstep `s(u) = 6u^5 - 15u^4 + 10u^3` on `[0,1]` (C^2 glue) and
/// its derivatives.
fn quintic(u: f64) -> (f64, f64, f64) {
    let u2 = u * u;
    let u3 = u2 * u;
    (
        ((6.0 * u - 15.0) * u + 10.0) * u3,
        ((30.0 * u - 60.0) * u + 30.0) * u2,
        ((120.0 * u - 180.0) * u + 60.0) * u,
    )
}

/// One-dimensional C^2 plateau bump: 1 on `[-r_one, r_one]`, 0 outside
/// `[-r_zero, r_zero]`, quintic transition in between.
#[derive(Debug, Clone, Copy)]
pub struct PlateauBump {
    pub r_one: f64,
    pub r_zero: f64,
}

impl PlateauBump {
    pub fn new(r_one: f64, r_zero: f64) -> Self {
        assert!(0.0 < r_one && r_one < r_zero, "need 0 < r_one < r_zero");
        PlateauBump { r_one, r_zero }
    }

    /// Value, first and second derivative at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let a = t.abs();
        if a <= self.r_one {
            return (1.0, 0.0, 0.0);
        }
        if a >= self.r_zero {
            return (0.0, 0.0, 0.0);
        }
        let w = self.r_zero - self.r_one;
        let u = (a - self.r_one) / w;
        let (s, s1, s2) = quintic(u);
        let sign = if t < 0.0 { -1.0 } else { 1.0 };
        // value = 1 - s(u(|t|)); chain rule through u = (|t| - r_one)/w.
        (1.0 - s, -sign * s1 / w, -s2 / (w * w))
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}
