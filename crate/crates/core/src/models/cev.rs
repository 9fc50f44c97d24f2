//! Constant elasticity of variance: `dS = rS dt + σ S_ref^{1-β} S^β dW`.
//!
//! `σ` is the local volatility at the reference spot, which is reset to the
//! current spot each day. Below `β = 1` the discounted, spot-scaled price is
//! a time-changed squared Bessel process, giving the non-central chi-square
//! call formula and a closed-form transition density.

use crate::special::{ln_bessel_i, ncx2_cdf, ncx2_sf};

/// Variance clock `∫_0^τ σ² e^{-2r(1-β)t} dt`.
pub(crate) fn clock(sigma: f64, beta: f64, rate: f64, tau: f64) -> f64 {
    let c = 2.0 * rate * (1.0 - beta);
    if c.abs() < 1e-12 {
        sigma * sigma * tau
    } else {
        sigma * sigma * (-(-c * tau).exp_m1()) / c
    }
}

/// Normalised call `E[(X_v - k)^+]` for the driftless CEV process from 1,
/// `β < 1`, on clock `v`.
pub(crate) fn call(beta: f64, v: f64, k: f64) -> f64 {
    let omb = 1.0 - beta;
    let scale = omb * omb * v;
    let a = k.powf(2.0 * omb) / scale;
    let b = 1.0 / omb;
    let c = 1.0 / scale;
    let value = ncx2_sf(a, b + 2.0, c) - k * ncx2_cdf(c, b, a);
    value.clamp((1.0 - k).max(0.0), 1.0)
}

/// Log-density of `ln X_v` for the driftless CEV process from 1, `β < 1`.
pub(crate) fn log_density(beta: f64, v: f64, y: f64) -> f64 {
    let omb = 1.0 - beta;
    let p = 2.0 * omb;
    let scale = omb * omb;
    let z0 = 1.0 / scale;
    let z = (p * y).exp() / scale;
    let order = 1.0 / p;
    // absorbed squared Bessel density of index -1/(2(1-β)) at time v
    let ln_q = -(2.0 * v).ln() - (z / z0).ln() / (2.0 * p) - (z0 + z) / (2.0 * v)
        + ln_bessel_i(order, (z0 * z).sqrt() / v);
    ln_q + p.ln() + z.ln()
}
