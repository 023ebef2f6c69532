//! Scalar helpers shared across modules.

use rand::Rng;

/// Numerically stable logistic function.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`logistic`]; caller must keep `p` strictly inside (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]. Maps 0 to a raw value deep enough in the tail
/// that `softplus` rounds back to exactly 0.0.
pub fn softplus_inv(n: f64) -> f64 {
    assert!(n >= 0.0, "softplus range is non-negative, got {n}");
    let em1 = n.exp_m1();
    if em1 <= 0.0 {
        -750.0
    } else {
        em1.ln()
    }
}

/// One Box-Muller draw from N(mean, std^2).
pub fn normal(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    mean + std * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
