//! Characteristic functions of the log-return and the cumulants used to
//! size Fourier truncation ranges.
//!
//! Everything is computed in the martingale frame, for `Y = ln(S_τ / F_τ)`
//! with `E[e^Y] = 1`; [`char_fn`] adds the `iurτ` drift on top.

use num_complex::Complex64;

use super::{ModelFamily, ModelInstance};
use crate::error::{Error, Result};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// `E[exp(iu ln(S_τ/S_0))]` under the risk-neutral law with rate `rate`.
pub fn char_fn(m: &ModelInstance, u: Complex64, tau: f64, rate: f64) -> Result<Complex64> {
    Ok((I * u * rate * tau + ln_cf_mart(m, u, tau)?).exp())
}

/// `ln E[exp(iuY)]` with `Y = ln(S_τ / F_τ)`.
pub(crate) fn ln_cf_mart(m: &ModelInstance, u: Complex64, tau: f64) -> Result<Complex64> {
    let x = &m.params;
    // real part of iu, the exponential tilt
    let s = -u.im;
    let iu = I * u;
    let a = u * u + iu;
    let outside = || Error::OutsideStrip {
        family: m.family,
        argument: format!("{u}"),
    };
    let value = match m.family {
        ModelFamily::BlackScholes => -0.5 * x[0] * x[0] * tau * a,
        ModelFamily::Merton => {
            let (sigma, lambda, mu, delta) = (x[0], x[1], x[2], x[3]);
            tau * (-0.5 * sigma * sigma * a + merton_jumps(lambda, mu, delta, u))
        }
        ModelFamily::Kou => {
            let (sigma, lambda, p_up, eta) = (x[0], x[1], x[2], x[3]);
            if s.abs() >= eta {
                return Err(outside());
            }
            let psi = |iu: Complex64| p_up * eta / (eta - iu) + (1.0 - p_up) * eta / (eta + iu);
            let comp = psi(Complex64::new(1.0, 0.0)) - 1.0;
            tau * (-0.5 * sigma * sigma * a + lambda * (psi(iu) - 1.0) - iu * lambda * comp)
        }
        ModelFamily::VarianceGamma => {
            let (sigma, nu, theta) = (x[0], x[1], x[2]);
            if 1.0 - theta * nu * s - 0.5 * sigma * sigma * nu * s * s <= 0.0 {
                return Err(outside());
            }
            let omega = (1.0 - theta * nu - 0.5 * sigma * sigma * nu).ln() / nu;
            -(tau / nu) * (1.0 - iu * theta * nu + 0.5 * sigma * sigma * nu * u * u).ln()
                + iu * omega * tau
        }
        ModelFamily::Nig => {
            let (alpha, beta, delta) = (x[0], x[1], x[2]);
            if (beta + s).abs() >= alpha {
                return Err(outside());
            }
            let gamma = (alpha * alpha - beta * beta).sqrt();
            let omega = -delta * (gamma - (alpha * alpha - (beta + 1.0) * (beta + 1.0)).sqrt());
            let root = (alpha * alpha - (beta + iu) * (beta + iu)).sqrt();
            tau * (delta * (gamma - root) + iu * omega)
        }
        ModelFamily::Heston => heston(x[0], x[1], x[2], x[3], x[4], u, tau),
        ModelFamily::Bates => {
            let mu = x[6];
            heston(x[0], x[1], x[2], x[3], x[4], u, tau) + tau * merton_jumps(x[5], mu, mu.abs(), u)
        }
        ModelFamily::Cev | ModelFamily::Sabr => {
            return Err(Error::NoCharacteristicFunction { family: m.family })
        }
    };
    Ok(value)
}

/// Compensated lognormal-jump exponent per unit time.
fn merton_jumps(lambda: f64, mu: f64, delta: f64, u: Complex64) -> Complex64 {
    let iu = I * u;
    let jump = (iu * mu - 0.5 * delta * delta * u * u).exp();
    let comp = (mu + 0.5 * delta * delta).exp_m1();
    lambda * (jump - 1.0) - iu * lambda * comp
}

/// `ln(1 + w)` accurate for small complex `w`.
fn ln1p(w: Complex64) -> Complex64 {
    if w.norm() < 1e-3 {
        let mut term = w;
        let mut sum = Complex64::new(0.0, 0.0);
        for n in 1..=7 {
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * term / n as f64;
            term *= w;
        }
        sum
    } else {
        (1.0 + w).ln()
    }
}

/// Heston exponent in the rotation-free form, rearranged so that the
/// vol-of-vol can go to zero without cancellation.
fn heston(
    kappa: f64,
    theta: f64,
    sigma: f64,
    rho: f64,
    v0: f64,
    u: Complex64,
    tau: f64,
) -> Complex64 {
    let iu = I * u;
    let a = u * u + iu;
    let xi = kappa - sigma * rho * iu;
    let mut d = (xi * xi + sigma * sigma * a).sqrt();
    // the root keeping |xi + d| >= |xi - d|; at a = 0 with kappa < rho sigma
    // the principal root gives xi + d = 0
    if (xi + d).norm_sqr() < (xi - d).norm_sqr() {
        d = -d;
    }
    let sum = xi + d;
    // (xi - d) / sigma^2 and g = (xi - d)/(xi + d) without subtracting
    let xi_minus_d_over_s2 = -a / sum;
    let g = -sigma * sigma * a / (sum * sum);
    let e = (-d * tau).exp();
    let one_minus_e = -(-d * tau).exp_m1_c();
    let w = g * one_minus_e / (1.0 - g);
    let log_term = if sigma > 0.0 {
        ln1p(w) / (sigma * sigma)
    } else {
        Complex64::new(0.0, 0.0)
    };
    let c = kappa * theta * (xi_minus_d_over_s2 * tau - 2.0 * log_term);
    let dd = xi_minus_d_over_s2 * one_minus_e / (1.0 - g * e);
    c + dd * v0
}

trait ExpM1 {
    fn exp_m1_c(self) -> Complex64;
}

impl ExpM1 for Complex64 {
    /// `e^z - 1` without cancellation near zero.
    fn exp_m1_c(self) -> Complex64 {
        if self.norm() < 1e-5 {
            self + 0.5 * self * self + self * self * self / 6.0
        } else {
            self.exp() - 1.0
        }
    }
}

/// First, second and fourth cumulants of the martingale-frame log-return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cumulants {
    pub c1: f64,
    pub c2: f64,
    pub c4: f64,
}

pub fn cumulants(m: &ModelInstance, tau: f64) -> Result<Cumulants> {
    let x = &m.params;
    let jump = |lambda: f64, mu: f64, delta: f64| {
        let d2 = delta * delta;
        (
            lambda * mu - lambda * (mu + 0.5 * d2).exp_m1(),
            lambda * (mu * mu + d2),
            lambda * (mu.powi(4) + 6.0 * d2 * mu * mu + 3.0 * d2 * d2),
        )
    };
    let c = match m.family {
        ModelFamily::BlackScholes => {
            let v = x[0] * x[0];
            Cumulants {
                c1: -0.5 * v * tau,
                c2: v * tau,
                c4: 0.0,
            }
        }
        ModelFamily::Merton => {
            let v = x[0] * x[0];
            let (j1, j2, j4) = jump(x[1], x[2], x[3]);
            Cumulants {
                c1: tau * (-0.5 * v + j1),
                c2: tau * (v + j2),
                c4: tau * j4,
            }
        }
        ModelFamily::Kou => {
            let (sigma, lambda, p_up, eta) = (x[0], x[1], x[2], x[3]);
            let mean_jump = (2.0 * p_up - 1.0) / eta;
            let comp = p_up * eta / (eta - 1.0) + (1.0 - p_up) * eta / (eta + 1.0) - 1.0;
            Cumulants {
                c1: tau * (-0.5 * sigma * sigma - lambda * comp + lambda * mean_jump),
                c2: tau * (sigma * sigma + lambda * 2.0 / (eta * eta)),
                c4: tau * lambda * 24.0 / eta.powi(4),
            }
        }
        ModelFamily::VarianceGamma => {
            let (sigma, nu, theta) = (x[0], x[1], x[2]);
            let s2 = sigma * sigma;
            let omega = (1.0 - theta * nu - 0.5 * s2 * nu).ln() / nu;
            Cumulants {
                c1: tau * (theta + omega),
                c2: tau * (s2 + nu * theta * theta),
                c4: tau
                    * 3.0
                    * (s2 * s2 * nu
                        + 2.0 * theta.powi(4) * nu.powi(3)
                        + 4.0 * s2 * theta * theta * nu * nu),
            }
        }
        ModelFamily::Nig => {
            let (alpha, beta, delta) = (x[0], x[1], x[2]);
            let gamma = (alpha * alpha - beta * beta).sqrt();
            let omega = -delta * (gamma - (alpha * alpha - (beta + 1.0).powi(2)).sqrt());
            Cumulants {
                c1: tau * (omega + delta * beta / gamma),
                c2: tau * delta * alpha * alpha / gamma.powi(3),
                c4: tau * 3.0 * delta * alpha * alpha * (alpha * alpha + 4.0 * beta * beta)
                    / gamma.powi(7),
            }
        }
        ModelFamily::Heston | ModelFamily::Bates => {
            let (kappa, theta, sigma, rho, v0) = (x[0], x[1], x[2], x[3], x[4]);
            let mut c = heston_cumulants(kappa, theta, sigma, rho, v0, tau);
            if m.family == ModelFamily::Bates {
                let mu = x[6];
                let (j1, j2, j4) = jump(x[5], mu, mu.abs());
                c.c1 += tau * j1;
                c.c2 += tau * j2;
                c.c4 += tau * j4;
            }
            c
        }
        ModelFamily::Cev | ModelFamily::Sabr => {
            return Err(Error::NoCharacteristicFunction { family: m.family })
        }
    };
    Ok(c)
}

fn heston_cumulants(kappa: f64, theta: f64, sigma: f64, rho: f64, v0: f64, t: f64) -> Cumulants {
    let e = (-kappa * t).exp();
    let c1 = (1.0 - e) * (theta - v0) / (2.0 * kappa) - 0.5 * theta * t;
    let k = kappa;
    let dv = v0 - theta;
    // Var X = ∫E v - ρσ ∫g E v + σ²/4 ∫g² E v, with g(u) = (1 - e^{-ku})/k
    let int_m = theta * t + dv * (1.0 - e) / k;
    let int_g = (t - (1.0 - e) / k) / k;
    let int_g2 = (t - 2.0 * (1.0 - e) / k + (1.0 - e * e) / (2.0 * k)) / (k * k);
    let a = theta * int_g + dv * ((1.0 - e) / k - t * e) / k;
    let b = theta * int_g2 + dv * ((1.0 - e) / k - 2.0 * t * e + (e - e * e) / k) / (k * k);
    let c2 = int_m - rho * sigma * a + 0.25 * sigma * sigma * b;
    // the closed form cancels badly for tiny kappa*t; fall back to the
    // integrated variance if it breaks down entirely
    let c2 = if c2.is_finite() && c2 > 0.0 {
        c2
    } else {
        theta * t + (v0 - theta) * (1.0 - e) / kappa
    };
    Cumulants { c1, c2, c4: 0.0 }
}

/// Exponential decay rates of the lower and upper density tails, where
/// the family has them.
fn tail_rates(m: &ModelInstance) -> Option<(f64, f64)> {
    let x = &m.params;
    match m.family {
        ModelFamily::Kou => Some((x[3], x[3])),
        ModelFamily::VarianceGamma => {
            let (sigma, nu, theta) = (x[0], x[1], x[2]);
            let s2 = sigma * sigma;
            let root = (theta * theta / (s2 * s2) + 2.0 / (s2 * nu)).sqrt();
            Some((root + theta / s2, root - theta / s2))
        }
        ModelFamily::Nig => Some((x[0] + x[1], x[0] - x[1])),
        _ => None,
    }
}

/// Truncation interval `[a, b]` for the log-return over `tau`.
pub(crate) fn truncation_range(m: &ModelInstance, tau: f64) -> Result<(f64, f64)> {
    const L: f64 = 10.0;
    // nats of tail decay kept for exponential tails
    const TAIL: f64 = 20.0;
    let c = cumulants(m, tau)?;
    let half = L * (c.c2 + c.c4.sqrt()).sqrt();
    let (mut lo, mut hi) = (half, half);
    let x = &m.params;
    let diffusive = |var: f64| L * (var * tau).sqrt();
    match m.family {
        ModelFamily::Merton => {
            let reach = x[2].abs() + 8.0 * x[3] + diffusive(x[0] * x[0]);
            lo = lo.max(reach);
            hi = hi.max(reach);
        }
        ModelFamily::Bates => {
            let reach = 9.0 * x[6].abs() + diffusive(x[1].max(x[4]));
            lo = lo.max(reach);
            hi = hi.max(reach);
        }
        _ => {}
    }
    if let Some((down, up)) = tail_rates(m) {
        let base = match m.family {
            ModelFamily::Kou => diffusive(x[0] * x[0]),
            _ => 0.0,
        };
        lo = lo.max(TAIL / down + base);
        hi = hi.max(TAIL / up + base);
    }
    Ok((c.c1 - lo, c.c1 + hi))
}
