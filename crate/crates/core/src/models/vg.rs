//! Variance gamma as a normal mean-variance mixture over a gamma clock.
//!
//! Conditional on the clock `G ~ Gamma(τ/ν, ν)`, the log-return is Gaussian
//! with mean `ωτ + θG` and variance `σ²G`. Expectations over `G` use the
//! trapezoidal rule in `ℓ = ln G`, which handles the integrable singularity
//! of the gamma density at short horizons.

use super::ModelInstance;
use crate::market_data::black_call;
use crate::special::{ln_gamma, norm_cdf};

pub(crate) struct GammaClock {
    /// Clock values `g_i = e^{ℓ_i}`.
    g: Vec<f64>,
    /// Trapezoidal weights `p_ℓ(ℓ_i) Δℓ`.
    w: Vec<f64>,
    sigma: f64,
    theta: f64,
    /// `ωτ`.
    drift: f64,
}

impl GammaClock {
    pub(crate) fn new(m: &ModelInstance, tau: f64) -> Self {
        let (sigma, nu, theta) = (m.params[0], m.params[1], m.params[2]);
        let omega = (1.0 - theta * nu - 0.5 * sigma * sigma * nu).ln() / nu;
        let s = tau / nu;
        let lo = nu.ln() - 40.0 / (s + 0.5);
        let hi = (nu * (s + 10.0 * s.sqrt() + 40.0)).ln();
        let step = (0.25 / s.sqrt()).min(0.1);
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let norm = -ln_gamma(s) - s * nu.ln();
        let mut g = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for i in 0..n {
            let l = lo + i as f64 * step;
            let gi = l.exp();
            let lw = s * l - gi / nu + norm;
            g.push(gi);
            w.push(lw.exp() * step);
        }
        GammaClock {
            g,
            w,
            sigma,
            theta,
            drift: omega * tau,
        }
    }

    /// `E[f(G)]` written as `f(0) + E[f(G) - f(0)]`.
    fn expect(&self, f0: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut sum = 0.0;
        for (&g, &w) in self.g.iter().zip(&self.w) {
            if w > 0.0 {
                sum += w * (f(g) - f0);
            }
        }
        f0 + sum
    }

    /// Normalised call `E[(e^Y - k)^+]`.
    pub(crate) fn call(&self, k: f64) -> f64 {
        let f0 = (self.drift.exp() - k).max(0.0);
        let v = self.expect(f0, |g| {
            let fwd = (self.drift + (self.theta + 0.5 * self.sigma * self.sigma) * g).exp();
            fwd * black_call(k / fwd, self.sigma * g.sqrt())
        });
        v.clamp((1.0 - k).max(0.0), 1.0)
    }

    /// `P(Y <= y)`.
    pub(crate) fn cdf(&self, y: f64) -> f64 {
        let x = y - self.drift;
        let f0 = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            0.0
        } else {
            0.5
        };
        let v = self.expect(f0, |g| {
            norm_cdf((x - self.theta * g) / (self.sigma * g.sqrt()))
        });
        v.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::cos::cos_calls;

    #[test]
    fn mixture_prices_agree_with_cosine_series_at_long_expiry() {
        // at two years the characteristic function decays fast enough for the
        // cosine route to serve as an independent check
        let m = ModelInstance::parse_line("variance_gamma,sigma=0.2,nu=0.2,theta=-0.15").unwrap();
        let ks = [0.8, 1.0, 1.2];
        let cos = cos_calls(&m, 2.0, &ks).unwrap();
        let clock = GammaClock::new(&m, 2.0);
        for (&k, &c) in ks.iter().zip(&cos) {
            assert!(
                (clock.call(k) - c).abs() < 1e-9,
                "k {k}: {} vs {c}",
                clock.call(k)
            );
        }
    }

    #[test]
    fn clock_weights_sum_to_one_at_a_day() {
        let m = ModelInstance::parse_line("variance_gamma,sigma=0.2,nu=0.2,theta=-0.15").unwrap();
        let clock = GammaClock::new(&m, 1.0 / 252.0);
        let total: f64 = clock.w.iter().sum();
        // mass below the lowest node is (g_lo / nu)^s / Γ(s+1)
        let s = 1.0 / 252.0 / 0.2;
        let below = (s * (clock.g[0] / 0.2).ln() - ln_gamma(s + 1.0)).exp();
        assert!((total + below - 1.0).abs() < 1e-2, "{total} + {below}");
        assert!(clock.cdf(-1.0) < 1e-8 && clock.cdf(1.0) > 1.0 - 1e-8);
        assert!((0.0..=1.0).contains(&clock.cdf(0.0)));
    }
}
