//! Cosine-series pricing of European calls from the characteristic function.
//!
//! The put payoff `(k - e^y)^+` is expanded on the truncation interval and the
//! call follows from parity on a unit forward.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::cf::{ln_cf_mart, truncation_range};
use super::ModelInstance;
use crate::error::{Error, Result};

const MIN_TERMS: usize = 256;
const MAX_TERMS: usize = 1 << 16;
/// Largest characteristic-function modulus allowed over the last eighth of
/// the series before the term count is doubled.
const TAIL_TOLERANCE: f64 = 1e-13;

/// Normalised call prices `E[(e^Y - k)^+]` for one expiry.
pub(crate) fn cos_calls(m: &ModelInstance, tau: f64, ks: &[f64]) -> Result<Vec<f64>> {
    let (a, b) = truncation_range(m, tau)?;
    let width = b - a;
    let coeffs = series(m, tau, a, width)?;
    Ok(ks
        .iter()
        .map(|&k| call_from_series(&coeffs, a, b, k))
        .collect())
}

/// `Re[φ(u_n) e^{-i u_n a}]` for `u_n = nπ/(b - a)`, with enough terms for
/// the modulus to have decayed below the tolerance.
fn series(m: &ModelInstance, tau: f64, a: f64, width: f64) -> Result<Vec<f64>> {
    let mut coeffs: Vec<f64> = Vec::with_capacity(MIN_TERMS);
    let mut moduli: Vec<f64> = Vec::with_capacity(MIN_TERMS);
    let mut n_terms = MIN_TERMS;
    loop {
        for n in coeffs.len()..n_terms {
            let u = n as f64 * PI / width;
            let ln_phi = ln_cf_mart(m, Complex64::new(u, 0.0), tau)?;
            let v = (ln_phi - Complex64::new(0.0, u * a)).exp();
            coeffs.push(if v.re.is_finite() { v.re } else { f64::NAN });
            moduli.push(ln_phi.re.exp());
        }
        let tail = moduli[n_terms - n_terms / 8..]
            .iter()
            .fold(0.0f64, |acc, &x| {
                if x.is_nan() {
                    f64::INFINITY
                } else {
                    acc.max(x)
                }
            });
        if tail < TAIL_TOLERANCE {
            return Ok(coeffs);
        }
        if n_terms >= MAX_TERMS {
            return Err(Error::Quadrature {
                family: m.family,
                params: m.to_string(),
                message: format!(
                    "cosine series at expiry {tau} not converged after {n_terms} terms (tail {tail:.2e})"
                ),
            });
        }
        n_terms *= 2;
    }
}

fn call_from_series(coeffs: &[f64], a: f64, b: f64, k: f64) -> f64 {
    let intrinsic = (1.0 - k).max(0.0);
    let c = k.ln();
    if c <= a {
        return intrinsic;
    }
    let d = c.min(b);
    let width = b - a;
    let span = d - a;
    let ed = d.exp();
    let ea = a.exp();
    let mut put = 0.5 * coeffs[0] * (k * span - (ed - ea));
    // cos/sin(u_n span) by rotation, re-seeded exactly every 128 steps
    let step = PI / width;
    let mut rot = Complex64::new(1.0, 0.0);
    let inc = Complex64::from_polar(1.0, step * span);
    for (n, &coef) in coeffs.iter().enumerate().skip(1) {
        if n % 128 == 1 {
            rot = Complex64::from_polar(1.0, n as f64 * step * span);
        } else {
            rot *= inc;
        }
        let u = n as f64 * step;
        let (cos, sin) = (rot.re, rot.im);
        let psi = sin / u;
        let chi = (cos * ed - ea + u * sin * ed) / (1.0 + u * u);
        put += coef * (k * psi - chi);
    }
    put *= 2.0 / width;
    (put + 1.0 - k).clamp(intrinsic, 1.0)
}
