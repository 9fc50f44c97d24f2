//! Black-Scholes pricing in normalised units and its inverse.

use crate::error::{Error, Result};
use crate::special::{norm_cdf, norm_pdf};

/// Undiscounted call on a unit forward: `E[(F_T - k)^+]` for lognormal
/// `F_T` with total volatility `w = σ√τ`.
pub fn black_call(k: f64, w: f64) -> f64 {
    if k <= 0.0 {
        return 1.0 - k;
    }
    if w <= 0.0 {
        return (1.0 - k).max(0.0);
    }
    let d1 = (-k.ln() + 0.5 * w * w) / w;
    let d2 = d1 - w;
    let value = if k < 1.0 {
        // in the money: intrinsic plus put via parity keeps the time value exact
        (1.0 - k) + k * norm_cdf(-d2) - norm_cdf(-d1)
    } else {
        norm_cdf(d1) - k * norm_cdf(d2)
    };
    value.clamp((1.0 - k).max(0.0), 1.0)
}

/// Black-Scholes call price with continuously compounded `rate`.
pub fn vol_to_price(vol: f64, spot: f64, strike: f64, expiry: f64, rate: f64) -> f64 {
    debug_assert!(vol > 0.0 && spot > 0.0 && strike > 0.0 && expiry > 0.0);
    let forward = spot * (rate * expiry).exp();
    spot * black_call(strike / forward, vol * expiry.sqrt())
}

/// Total volatility `w` with `black_call(k, w) = z`.
///
/// Newton steps on `w` with a bisection safeguard inside a bracket that is
/// grown by doubling.
pub fn implied_total_vol(z: f64, k: f64) -> Result<f64> {
    let intrinsic = (1.0 - k).max(0.0);
    if !(k > 0.0) || !z.is_finite() || z <= intrinsic || z >= 1.0 {
        return Err(Error::ImpliedVol(format!(
            "normalised price {z} outside ({intrinsic}, 1) at moneyness {k}"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while black_call(k, hi) < z {
        lo = hi;
        hi *= 2.0;
        if hi > 1e3 {
            return Err(Error::ImpliedVol(format!(
                "no volatility reproduces {z} at moneyness {k}"
            )));
        }
    }
    // start from the at-the-money approximation
    let mut w = (2.0 * std::f64::consts::PI).sqrt() * (z - intrinsic).max(1e-12);
    if !(w > lo && w < hi) {
        w = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = black_call(k, w) - z;
        if f > 0.0 {
            hi = w;
        } else {
            lo = w;
        }
        let d1 = (-k.ln() + 0.5 * w * w) / w;
        let vega = norm_pdf(d1);
        let mut next = w - f / vega;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - w).abs() <= 1e-15 * w.max(1e-300) || hi - lo <= 1e-16 * hi {
            return Ok(next);
        }
        w = next;
    }
    Ok(w)
}

/// Implied volatility of a call quoted at `price`.
pub fn implied_vol(price: f64, spot: f64, strike: f64, expiry: f64, rate: f64) -> Result<f64> {
    if !(spot > 0.0 && strike > 0.0 && expiry > 0.0) {
        return Err(Error::invalid("spot, strike and expiry must be positive"));
    }
    let forward = spot * (rate * expiry).exp();
    let w = implied_total_vol(price / spot, strike / forward)?;
    Ok(w / expiry.sqrt())
}
