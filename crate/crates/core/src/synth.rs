//! Synthetic market data drawn from a single model instance.
//!
//! The log-price path is sampled from the instance's own one-step law by
//! inverse transform; each day's surface is the instance's model surface
//! inverted to implied vols, plus optional Gaussian noise in vol units. The
//! path and the noise come from separate streams, so changing the noise
//! level leaves the path unchanged.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::market_data::{implied_total_vol, OptionGrid, SurfaceObservation, TRADING_DAY};
use crate::models::{normalized_surface, transition_law, ModelInstance};

/// Smallest vol written after noise is added.
const VOL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_days: usize,
    pub seed: u64,
    /// Standard deviation of additive vol noise.
    pub noise: f64,
    pub spot: f64,
    pub rate: f64,
    pub start: NaiveDate,
    pub grid: OptionGrid,
    pub h: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_days: 250,
            seed: 0,
            noise: 0.0,
            spot: 100.0,
            rate: 0.0,
            start: NaiveDate::from_ymd_opt(2020, 1, 2).expect("valid date"),
            grid: OptionGrid::default(),
            h: TRADING_DAY,
        }
    }
}

/// Weekdays from `start` on, `n` of them.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Implied vols of the instance's own surface.
pub fn model_vols(m: &ModelInstance, grid: &OptionGrid, rate: f64) -> Result<Vec<Vec<f64>>> {
    let s = normalized_surface(m, grid, rate)?;
    grid.expiries()
        .iter()
        .zip(s.rows())
        .map(|(&tau, row)| {
            grid.moneyness()
                .iter()
                .zip(&row[1..])
                .map(|(&k, &z)| {
                    implied_total_vol(z, k)
                        .map(|w| w / tau.sqrt())
                        .map_err(|e| {
                            Error::ImpliedVol(format!("{m} at expiry {tau}, moneyness {k}: {e}"))
                        })
                })
                .collect()
        })
        .collect()
}

pub fn generate_synthetic(m: &ModelInstance, cfg: &SynthConfig) -> Result<Vec<SurfaceObservation>> {
    if cfg.n_days == 0 {
        return Err(Error::invalid("need at least one day"));
    }
    if !(cfg.spot > 0.0) || !(cfg.noise >= 0.0) {
        return Err(Error::invalid(
            "spot must be positive and noise non-negative",
        ));
    }
    let law = transition_law(m, cfg.h)?;
    let clean = model_vols(m, &cfg.grid, cfg.rate)?;
    let mut path_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);

    let mut x = cfg.spot.ln();
    let mut out = Vec::with_capacity(cfg.n_days);
    for (t, date) in business_days(cfg.start, cfg.n_days).into_iter().enumerate() {
        if t > 0 {
            // open interval keeps the quantile finite
            let u: f64 = path_rng.random_range(f64::EPSILON..1.0);
            x += cfg.rate * cfg.h + law.quantile(u);
        }
        let vols = clean
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| {
                        if cfg.noise > 0.0 {
                            let e: f64 = noise_rng.sample(StandardNormal);
                            (v + cfg.noise * e).max(VOL_FLOOR)
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        let obs = SurfaceObservation::new(date, x.exp(), cfg.rate, cfg.grid.clone(), vols)?;
        // continue from the log of the stored spot so a reloaded file
        // reproduces the same increments
        x = obs.log_price;
        out.push(obs);
    }
    Ok(out)
}
