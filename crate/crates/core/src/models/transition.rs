//! One-step transition laws of the log-price.
//!
//! Laws are built in the martingale frame (the log-return minus `r h`) with
//! any volatility state frozen over the step, and shifted by the day's rate
//! when evaluated.

use serde::{Deserialize, Serialize};

use super::cf::{cumulants, truncation_range};
use super::fourier::{density_from_cf, DensityTable};
use super::vg::GammaClock;
use super::{cev, ModelFamily, ModelInstance};
use crate::error::{Error, Result};
use crate::special::{ln_bessel_k, norm_cdf, norm_log_pdf, norm_quantile};

pub const DEFAULT_LOG_DENSITY_FLOOR: f64 = -7000.0;

/// Largest table the closed-form tabulations will build.
const MAX_TABLE: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Law of the martingale-frame one-step log-return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TransitionLaw {
    Gaussian {
        mean: f64,
        sd: f64,
    },
    /// Poisson-weighted Gaussians (lognormal jumps).
    Mixture(Vec<Component>),
    Table(DensityTable),
}

impl TransitionLaw {
    pub fn density(&self, y: f64) -> f64 {
        match self {
            TransitionLaw::Table(t) => t.pdf(y),
            _ => self.log_density(y).exp(),
        }
    }

    /// `ln` of the density; `-inf` where it vanishes.
    pub fn log_density(&self, y: f64) -> f64 {
        match self {
            TransitionLaw::Gaussian { mean, sd } => norm_log_pdf(y, *mean, *sd),
            TransitionLaw::Mixture(cs) => {
                let logs: Vec<f64> = cs
                    .iter()
                    .map(|c| c.weight.ln() + norm_log_pdf(y, c.mean, c.sd))
                    .collect();
                let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if peak == f64::NEG_INFINITY {
                    return peak;
                }
                peak + logs.iter().map(|l| (l - peak).exp()).sum::<f64>().ln()
            }
            TransitionLaw::Table(t) => t.pdf(y).ln(),
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        match self {
            TransitionLaw::Gaussian { mean, sd } => norm_cdf((y - mean) / sd),
            TransitionLaw::Mixture(cs) => cs
                .iter()
                .map(|c| c.weight * norm_cdf((y - c.mean) / c.sd))
                .sum::<f64>()
                .clamp(0.0, 1.0),
            TransitionLaw::Table(t) => t.cdf(y),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self {
            TransitionLaw::Gaussian { mean, sd } => mean + sd * norm_quantile(p),
            TransitionLaw::Table(t) => t.quantile(p),
            TransitionLaw::Mixture(_) => {
                let (mut lo, mut hi) = self.support();
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            TransitionLaw::Gaussian { mean, .. } => *mean,
            TransitionLaw::Mixture(cs) => cs.iter().map(|c| c.weight * c.mean).sum(),
            TransitionLaw::Table(t) => t.mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            TransitionLaw::Gaussian { sd, .. } => sd * sd,
            TransitionLaw::Mixture(cs) => {
                let mu = self.mean();
                cs.iter()
                    .map(|c| c.weight * (c.sd * c.sd + (c.mean - mu).powi(2)))
                    .sum()
            }
            TransitionLaw::Table(t) => t.variance(),
        }
    }

    /// Interval holding all but a negligible part of the mass.
    pub fn support(&self) -> (f64, f64) {
        const SDS: f64 = 12.0;
        match self {
            TransitionLaw::Gaussian { mean, sd } => (mean - SDS * sd, mean + SDS * sd),
            TransitionLaw::Mixture(cs) => cs
                .iter()
                .filter(|c| c.weight > 1e-16)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), c| {
                    (lo.min(c.mean - SDS * c.sd), hi.max(c.mean + SDS * c.sd))
                }),
            TransitionLaw::Table(t) => t.support(),
        }
    }
}

fn gaussian(variance: f64, h: f64) -> TransitionLaw {
    TransitionLaw::Gaussian {
        mean: -0.5 * variance * h,
        sd: (variance * h).sqrt(),
    }
}

/// Diffusion plus compound-Poisson lognormal jumps, in the martingale frame.
fn jump_mixture(variance: f64, lambda: f64, mu: f64, delta: f64, h: f64) -> TransitionLaw {
    let intensity = lambda * h;
    if intensity <= 0.0 {
        return gaussian(variance, h);
    }
    let drift = (-0.5 * variance - lambda * (mu + 0.5 * delta * delta).exp_m1()) * h;
    let mut components = Vec::new();
    let mut weight = (-intensity).exp();
    let mut cumulative = 0.0;
    for n in 0..200 {
        let nf = n as f64;
        if n > 0 {
            weight *= intensity / nf;
        }
        cumulative += weight;
        components.push(Component {
            weight,
            mean: drift + nf * mu,
            sd: (variance * h + nf * delta * delta).sqrt(),
        });
        if 1.0 - cumulative < 1e-16 || (nf > intensity && weight < 1e-300) {
            break;
        }
    }
    TransitionLaw::Mixture(components)
}

/// Builds the one-step law of instance `m` over `h` years.
pub fn transition_law(m: &ModelInstance, h: f64) -> Result<TransitionLaw> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step {h} must be positive")));
    }
    m.check()?;
    let x = &m.params;
    let law = match m.family {
        ModelFamily::BlackScholes => gaussian(x[0] * x[0], h),
        ModelFamily::Heston => gaussian(m.get("v0"), h),
        ModelFamily::Sabr => {
            let alpha = m.get("alpha");
            gaussian(alpha * alpha, h)
        }
        ModelFamily::Cev => {
            if x[1] >= 1.0 {
                gaussian(x[0] * x[0], h)
            } else {
                cev_table(x[0], x[1], h)
            }
        }
        ModelFamily::Merton => jump_mixture(x[0] * x[0], x[1], x[2], x[3], h),
        ModelFamily::Bates => {
            let mu = m.get("mu_j");
            jump_mixture(m.get("v0"), m.get("lambda_j"), mu, mu.abs(), h)
        }
        ModelFamily::Kou => TransitionLaw::Table(density_from_cf(m, h)?),
        ModelFamily::VarianceGamma => vg_table(m, h)?,
        ModelFamily::Nig => nig_table(m, h)?,
    };
    Ok(law)
}

/// `ln p(x0 -> x1)` over `h` years at `rate`, floored.
pub fn transition_log_density(
    m: &ModelInstance,
    x0: f64,
    x1: f64,
    h: f64,
    rate: f64,
    floor: f64,
) -> Result<f64> {
    let law = transition_law(m, h)?;
    Ok(law.log_density(x1 - x0 - rate * h).max(floor))
}

fn cev_table(sigma: f64, beta: f64, h: f64) -> TransitionLaw {
    let v = sigma * sigma * h;
    let sd = v.sqrt();
    let lo = -0.5 * v - 14.0 * sd;
    let hi = -0.5 * v + 14.0 * sd;
    let n = 1121;
    let dx = (hi - lo) / (n - 1) as f64;
    let values = (0..n)
        .map(|j| cev::log_density(beta, v, lo + j as f64 * dx).exp())
        .collect();
    TransitionLaw::Table(DensityTable::new(lo, dx, values))
}

/// Cell averages of the variance-gamma density from its mixture CDF.
fn vg_table(m: &ModelInstance, h: f64) -> Result<TransitionLaw> {
    let (lo, hi) = truncation_range(m, h)?;
    let sd = cumulants(m, h)?.c2.sqrt();
    let mut cells = ((hi - lo) / (sd / 16.0)).ceil() as usize;
    cells = cells.clamp(256, 4096);
    let dx = (hi - lo) / cells as f64;
    let clock = GammaClock::new(m, h);
    let edges: Vec<f64> = (0..=cells).map(|i| clock.cdf(lo + i as f64 * dx)).collect();
    let values = edges
        .windows(2)
        .map(|w| ((w[1] - w[0]) / dx).max(0.0))
        .collect();
    Ok(TransitionLaw::Table(DensityTable::new(
        lo + 0.5 * dx,
        dx,
        values,
    )))
}

struct NigDensity {
    alpha: f64,
    beta: f64,
    scale: f64,
    location: f64,
    ln_const: f64,
}

impl NigDensity {
    fn new(m: &ModelInstance, h: f64) -> Self {
        let (alpha, beta, delta) = (m.params[0], m.params[1], m.params[2]);
        let gamma = (alpha * alpha - beta * beta).sqrt();
        let omega = -delta * (gamma - (alpha * alpha - (beta + 1.0).powi(2)).sqrt());
        let scale = delta * h;
        NigDensity {
            alpha,
            beta,
            scale,
            location: omega * h,
            ln_const: (alpha * scale / std::f64::consts::PI).ln() + scale * gamma,
        }
    }

    fn log_density(&self, y: f64) -> f64 {
        let x = y - self.location;
        let q = self.scale.hypot(x);
        self.ln_const + ln_bessel_k(1.0, self.alpha * q) - q.ln() + self.beta * x
    }

    /// Mass of `[a, b]`. The substitution `y - location = scale sinh t`
    /// flattens the cusp-like core, which is far narrower than a day's sd
    /// when the scale is small.
    fn mass(&self, a: f64, b: f64) -> f64 {
        let ta = ((a - self.location) / self.scale).asinh();
        let tb = ((b - self.location) / self.scale).asinh();
        let n = 2 * ((4.0 * (tb - ta)).ceil() as usize).max(1);
        let step = (tb - ta) / n as f64;
        let f = |t: f64| {
            (self.log_density(self.location + self.scale * t.sinh()) + (self.scale * t.cosh()).ln())
                .exp()
        };
        let mut s = f(ta) + f(tb);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(ta + i as f64 * step);
        }
        s * step / 3.0
    }
}

fn nig_table(m: &ModelInstance, h: f64) -> Result<TransitionLaw> {
    let (lo, hi) = truncation_range(m, h)?;
    let sd = cumulants(m, h)?.c2.sqrt();
    let nig = NigDensity::new(m, h);
    let mut dx = (sd / 40.0).min(nig.scale / 8.0);
    if (hi - lo) / dx > (MAX_TABLE - 1) as f64 {
        dx = (hi - lo) / (MAX_TABLE - 1) as f64;
    }
    // cell averages, so the mass is right even when dx exceeds the core width
    let n = ((hi - lo) / dx).ceil() as usize;
    let values = (0..n)
        .map(|j| {
            let a = lo + j as f64 * dx;
            nig.mass(a, a + dx) / dx
        })
        .collect();
    Ok(TransitionLaw::Table(DensityTable::new(
        lo + 0.5 * dx,
        dx,
        values,
    )))
}

/// Probability of each interval `[edges[i], edges[i+1])` under the
/// martingale-frame law, computed without building a full table where a
/// cheaper route exists.
pub(crate) fn bin_masses(m: &ModelInstance, h: f64, edges: &[f64]) -> Result<Vec<f64>> {
    m.check()?;
    let from_cdf = |cdf: &dyn Fn(f64) -> f64| {
        let c: Vec<f64> = edges.iter().map(|&e| cdf(e)).collect();
        c.windows(2)
            .map(|w| (w[1] - w[0]).max(0.0))
            .collect::<Vec<_>>()
    };
    let simpson = |log_density: &dyn Fn(f64) -> f64| {
        edges
            .windows(2)
            .map(|w| {
                let n = 16;
                let step = (w[1] - w[0]) / n as f64;
                let mut s = 0.0;
                for i in 0..=n {
                    let c = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    s += c * log_density(w[0] + i as f64 * step).exp();
                }
                s * step / 3.0
            })
            .collect::<Vec<_>>()
    };
    let x = &m.params;
    Ok(match m.family {
        ModelFamily::VarianceGamma => {
            let clock = GammaClock::new(m, h);
            from_cdf(&|y| clock.cdf(y))
        }
        ModelFamily::Nig => {
            let nig = NigDensity::new(m, h);
            edges.windows(2).map(|w| nig.mass(w[0], w[1])).collect()
        }
        ModelFamily::Cev if x[1] < 1.0 => {
            let v = x[0] * x[0] * h;
            simpson(&|y| cev::log_density(x[1], v, y))
        }
        _ => {
            let law = transition_law(m, h)?;
            from_cdf(&|y| law.cdf(y))
        }
    })
}
