//! Surface fitting penalties.
//!
//! The structured penalty compares strike slopes of normalised call surfaces.
//! Minus the slope is a distribution tail, so the penalty is a squared
//! distance between implied terminal laws integrated over expiry:
//!
//! `Q = λ ∫_0^T ∫_0^∞ (c_k - c_k')² dk dτ`
//!
//! with piecewise-constant slopes in moneyness and the trapezium rule in
//! expiry (a rectangle on `[0, τ_1]`).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{MarketDay, PreparedUniverse};
use crate::error::{Error, Result};
use crate::market_data::{NormalizedSurface, OptionGrid, SurfaceObservation};
use crate::models::ModelFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PenaltyMode {
    Structured,
    Naive,
}

impl FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "structured" => Ok(PenaltyMode::Structured),
            "naive" => Ok(PenaltyMode::Naive),
            other => Err(Error::invalid(format!("unknown penalty mode {other:?}"))),
        }
    }
}

impl PenaltyMode {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyMode::Structured => "structured",
            PenaltyMode::Naive => "naive",
        }
    }
}

/// Default naive-mode weight: a bid-ask sized error in normalised price units.
pub const DEFAULT_NAIVE_WEIGHT: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub lambda: f64,
    pub mode: PenaltyMode,
    /// Per-instrument weights for naive mode; a single entry is broadcast.
    pub weights: Vec<f64>,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            lambda: 1.0,
            mode: PenaltyMode::Structured,
            weights: vec![DEFAULT_NAIVE_WEIGHT],
        }
    }
}

impl PenaltyConfig {
    pub fn structured(lambda: f64) -> Self {
        PenaltyConfig {
            lambda,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::invalid("naive weights must be positive"));
        }
        Ok(())
    }
}

/// Quadrature weights of the penalty on a grid: strike gaps `k_j - k_{j-1}`
/// (with `k_0 = 0`) and expiry weights whose sum is the longest expiry.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PenaltyWeights {
    pub dk: Vec<f64>,
    pub dtau: Vec<f64>,
}

impl PenaltyWeights {
    pub fn new(grid: &OptionGrid) -> Self {
        let mut prev = 0.0;
        let dk = grid
            .moneyness()
            .iter()
            .map(|&k| {
                let d = k - prev;
                prev = k;
                d
            })
            .collect();
        let t = grid.expiries();
        let m = t.len();
        let dtau = (0..m)
            .map(|i| {
                // rectangle on [0, τ_1], then trapezium
                let left = if i == 0 {
                    t[0]
                } else {
                    0.5 * (t[i] - t[i - 1])
                };
                let right = if i + 1 < m {
                    0.5 * (t[i + 1] - t[i])
                } else {
                    0.0
                };
                left + right
            })
            .collect();
        PenaltyWeights { dk, dtau }
    }

    /// `Σ_m w_m Σ_j Δk_j (a - b)^2` over flattened expiry-major slopes.
    pub fn quadratic(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dk.len();
        let mut total = 0.0;
        for (m, w) in self.dtau.iter().enumerate() {
            let mut inner = 0.0;
            for j in 0..n {
                let d = a[m * n + j] - b[m * n + j];
                inner += self.dk[j] * d * d;
            }
            total += w * inner;
        }
        total
    }
}

/// Piecewise slopes `(z_j - z_{j-1})/(k_j - k_{j-1})`, one vector per expiry.
pub fn strike_slopes(s: &NormalizedSurface) -> Vec<Vec<f64>> {
    let k = s.k();
    s.rows()
        .iter()
        .map(|z| {
            (1..k.len())
                .map(|j| (z[j] - z[j - 1]) / (k[j] - k[j - 1]))
                .collect()
        })
        .collect()
}

pub(crate) fn flat_slopes(s: &NormalizedSurface) -> Vec<f64> {
    strike_slopes(s).into_iter().flatten().collect()
}

/// Structured penalty `Q(model, market)`, scaled by `cfg.lambda`.
pub fn penalty_structured(
    model: &NormalizedSurface,
    market: &NormalizedSurface,
    cfg: &PenaltyConfig,
) -> Result<f64> {
    if model.grid() != market.grid() {
        return Err(Error::GridMismatch);
    }
    let w = PenaltyWeights::new(model.grid());
    Ok(cfg.lambda * w.quadratic(&flat_slopes(model), &flat_slopes(market)))
}

/// Naive penalty `Σ_a (y_a - z_a)^2 / w_a^2`.
pub fn penalty_naive(
    model_prices: &[f64],
    market_prices: &[f64],
    cfg: &PenaltyConfig,
) -> Result<f64> {
    if model_prices.len() != market_prices.len() {
        return Err(Error::invalid(format!(
            "price vectors differ in length ({} vs {})",
            model_prices.len(),
            market_prices.len()
        )));
    }
    let weight = |a: usize| -> Result<f64> {
        match cfg.weights.len() {
            1 => Ok(cfg.weights[0]),
            n if n == model_prices.len() => Ok(cfg.weights[a]),
            n => Err(Error::invalid(format!(
                "{n} weights for {} prices",
                model_prices.len()
            ))),
        }
    };
    let mut total = 0.0;
    for (a, (y, z)) in market_prices.iter().zip(model_prices).enumerate() {
        let w = weight(a)?;
        total += (y - z) * (y - z) / (w * w);
    }
    Ok(total)
}

/// Which instances enter the λ calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaScope {
    Universe,
    Family(ModelFamily),
}

impl FromStr for LambdaScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "universe" | "all" => Ok(LambdaScope::Universe),
            other => Ok(LambdaScope::Family(other.parse()?)),
        }
    }
}

impl LambdaScope {
    pub fn name(self) -> String {
        match self {
            LambdaScope::Universe => "universe".into(),
            LambdaScope::Family(f) => f.name().into(),
        }
    }
}

/// Result of a λ calibration with the averages that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCalibration {
    pub lambda: f64,
    pub mean_abs_log_density: f64,
    pub mean_penalty: f64,
}

/// λ equating the mean absolute transition log-density with the mean
/// structured penalty at λ = 1, over the training days and the instances in
/// scope.
pub fn calibrate_lambda(
    training: &[SurfaceObservation],
    universe: &PreparedUniverse,
    scope: LambdaScope,
    floor: f64,
) -> Result<LambdaCalibration> {
    if training.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "need at least two days, got {}",
            training.len()
        )));
    }
    let days = training
        .iter()
        .map(MarketDay::new)
        .collect::<Result<Vec<_>>>()?;
    calibrate_lambda_days(&days, universe, scope, floor)
}

pub(crate) fn calibrate_lambda_days(
    days: &[MarketDay],
    universe: &PreparedUniverse,
    scope: LambdaScope,
    floor: f64,
) -> Result<LambdaCalibration> {
    let members: Vec<usize> = (0..universe.len())
        .filter(|&i| match scope {
            LambdaScope::Universe => true,
            LambdaScope::Family(f) => universe.instance(i).family == f,
        })
        .collect();
    if members.is_empty() {
        return Err(Error::DegenerateTraining(format!(
            "no instances in scope {}",
            scope.name()
        )));
    }
    if days.len() < 2 {
        return Err(Error::DegenerateTraining("need at least two days".into()));
    }
    let mut sum_log = 0.0;
    let mut sum_q = 0.0;
    let mut count = 0usize;
    for pair in days.windows(2) {
        let parts = universe.raw_terms(&pair[0], &pair[1], &members, floor)?;
        for (log_p, q) in parts {
            sum_log += log_p.abs();
            sum_q += q.abs();
            count += 1;
        }
    }
    let mean_abs_log_density = sum_log / count as f64;
    let mean_penalty = sum_q / count as f64;
    if !(mean_penalty > 0.0) {
        return Err(Error::DegenerateTraining(
            "every instance fits every training surface exactly".into(),
        ));
    }
    Ok(LambdaCalibration {
        lambda: mean_abs_log_density / mean_penalty,
        mean_abs_log_density,
        mean_penalty,
    })
}
