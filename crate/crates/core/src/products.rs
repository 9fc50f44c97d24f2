//! Decision products from posterior weights: predictive densities, mixture
//! prices with their spread across models, and mixture hedges.

use serde::{Deserialize, Serialize};

use crate::engine::{Posterior, PreparedUniverse};
use crate::error::{Error, Result};
use crate::models::TransitionLaw;

/// Values `ξ_j` carrying weights `π_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceDistribution {
    values: Vec<f64>,
    weights: Vec<f64>,
    /// Indices sorted by value, ties by index.
    order: Vec<usize>,
}

impl PriceDistribution {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() || values.is_empty() {
            return Err(Error::invalid(format!(
                "{} values against {} weights",
                values.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "weights must be non-negative and values finite",
            ));
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        Ok(PriceDistribution {
            values,
            weights,
            order,
        })
    }

    /// `Σ π_j ξ_j`.
    pub fn mean(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v * w)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| w * (v - m) * (v - m))
            .sum()
    }

    /// Smallest value whose cumulative weight reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let total: f64 = self.weights.iter().sum();
        let target = p.clamp(0.0, 1.0) * total;
        let mut acc = 0.0;
        for &i in &self.order {
            if self.weights[i] == 0.0 {
                continue;
            }
            acc += self.weights[i];
            if acc >= target {
                return self.values[i];
            }
        }
        self.values[*self.order.last().expect("non-empty")]
    }

    /// Extremes over instances with positive weight.
    pub fn range(&self) -> (f64, f64) {
        let mut live = self.order.iter().filter(|&&i| self.weights[i] > 0.0);
        let lo = live
            .clone()
            .next()
            .map(|&i| self.values[i])
            .unwrap_or(f64::NAN);
        let hi = live
            .next_back()
            .map(|&i| self.values[i])
            .unwrap_or(f64::NAN);
        (lo, hi)
    }
}

pub fn mixture_price(post: &Posterior, prices: &[f64]) -> Result<PriceDistribution> {
    PriceDistribution::new(prices.to_vec(), post.weights.clone())
}

/// Posterior-weighted hedge `Σ π_j θ_j`.
pub fn mixture_delta(post: &Posterior, deltas: &[f64]) -> Result<f64> {
    if deltas.len() != post.weights.len() {
        return Err(Error::invalid(format!(
            "{} deltas for {} instances",
            deltas.len(),
            post.weights.len()
        )));
    }
    Ok(deltas.iter().zip(&post.weights).map(|(d, w)| d * w).sum())
}

/// Mixture of one-step transition densities of the next log-price.
pub struct PredictiveDensity<'a> {
    components: Vec<(f64, &'a TransitionLaw)>,
    /// `x_t + r h`: laws are martingale-frame log-returns.
    center: f64,
}

/// Weights below this are dropped from the mixture.
const NEGLIGIBLE: f64 = 1e-300;

pub fn predictive_density<'a>(
    post: &Posterior,
    universe: &'a PreparedUniverse,
    x_t: f64,
    rate: f64,
) -> Result<PredictiveDensity<'a>> {
    if post.weights.len() != universe.len() {
        return Err(Error::invalid("posterior does not match the universe"));
    }
    let components = post
        .weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > NEGLIGIBLE)
        .map(|(i, w)| (*w, universe.law(i)))
        .collect();
    Ok(PredictiveDensity {
        components,
        center: x_t + rate * universe.h(),
    })
}

impl PredictiveDensity<'_> {
    pub fn pdf(&self, x: f64) -> f64 {
        let y = x - self.center;
        self.components
            .iter()
            .map(|(w, law)| w * law.density(y))
            .sum()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let y = x - self.center;
        self.components.iter().map(|(w, law)| w * law.cdf(y)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.center
            + self
                .components
                .iter()
                .map(|(w, law)| w * law.mean())
                .sum::<f64>()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean() - self.center;
        self.components
            .iter()
            .map(|(w, law)| w * (law.variance() + (law.mean() - m).powi(2)))
            .sum()
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = self.support();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Interval covering every component's support.
    pub fn support(&self) -> (f64, f64) {
        let (lo, hi) = self.components.iter().fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), (_, law)| {
                let (a, b) = law.support();
                (lo.min(a), hi.max(b))
            },
        );
        (self.center + lo, self.center + hi)
    }

    /// Density on `n` equally spaced points of `[lo, hi]`.
    pub fn tabulate(&self, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)> {
        let n = n.max(2);
        let step = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let x = lo + i as f64 * step;
                (x, self.pdf(x))
            })
            .collect()
    }
}
