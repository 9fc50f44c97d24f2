use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::black::black_call;
use super::grid::OptionGrid;
use super::REPAIR_TOLERANCE;
use crate::error::{Error, Result};

/// One trading day of market data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceObservation {
    pub date: NaiveDate,
    pub spot: f64,
    pub rate: f64,
    pub grid: OptionGrid,
    /// Implied vols, `vols[expiry][moneyness]`.
    pub vols: Vec<Vec<f64>>,
    pub log_price: f64,
}

impl SurfaceObservation {
    pub fn new(
        date: NaiveDate,
        spot: f64,
        rate: f64,
        grid: OptionGrid,
        vols: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(spot.is_finite() && spot > 0.0) {
            return Err(Error::invalid(format!(
                "{date}: spot {spot} must be positive"
            )));
        }
        if !rate.is_finite() {
            return Err(Error::invalid(format!("{date}: rate must be finite")));
        }
        if vols.len() != grid.expiries().len()
            || vols.iter().any(|r| r.len() != grid.moneyness().len())
        {
            return Err(Error::invalid(format!(
                "{date}: vol matrix does not match the grid"
            )));
        }
        if vols.iter().flatten().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid(format!(
                "{date}: vols must be finite and positive"
            )));
        }
        Ok(SurfaceObservation {
            date,
            spot,
            rate,
            grid,
            vols,
            log_price: spot.ln(),
        })
    }
}

/// Normalised call prices `z = c(τ, k)` on forward moneyness, with the
/// zero-strike column `k_0 = 0`, `z_0 = 1` stored first in every row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSurface {
    grid: OptionGrid,
    /// Moneyness columns including `k_0 = 0`.
    k: Vec<f64>,
    z: Vec<Vec<f64>>,
}

impl NormalizedSurface {
    /// Builds a surface from quoted prices (without the `k_0` column),
    /// repairing violations up to [`REPAIR_TOLERANCE`] and rejecting larger ones.
    pub fn from_market(grid: OptionGrid, rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(grid, rows, true)
    }

    /// Builds a surface from model prices. Quadrature noise is projected away
    /// without a size check.
    pub fn from_model(grid: OptionGrid, rows: Vec<Vec<f64>>) -> Self {
        Self::build(grid, rows, false).expect("model surfaces are always repairable")
    }

    fn build(grid: OptionGrid, rows: Vec<Vec<f64>>, strict: bool) -> Result<Self> {
        if rows.len() != grid.expiries().len()
            || rows.iter().any(|r| r.len() != grid.moneyness().len())
        {
            return Err(Error::GridMismatch);
        }
        let mut k = Vec::with_capacity(grid.moneyness().len() + 1);
        k.push(0.0);
        k.extend_from_slice(grid.moneyness());
        let mut z = Vec::with_capacity(rows.len());
        for (m, row) in rows.into_iter().enumerate() {
            let expiry = grid.expiries()[m];
            let mut full = Vec::with_capacity(k.len());
            full.push(1.0);
            full.extend(row);
            repair_row(&k, &mut full, strict)
                .map_err(|message| Error::Arbitrage { expiry, message })?;
            z.push(full);
        }
        Ok(NormalizedSurface { grid, k, z })
    }

    pub fn grid(&self) -> &OptionGrid {
        &self.grid
    }

    /// Moneyness columns, starting with `k_0 = 0`.
    pub fn k(&self) -> &[f64] {
        &self.k
    }

    /// Rows per expiry, each starting with `z_0 = 1`.
    pub fn rows(&self) -> &[Vec<f64>] {
        &self.z
    }

    /// Quoted values only (the `k_0` column dropped), expiry-major.
    pub fn quoted(&self) -> impl Iterator<Item = f64> + '_ {
        self.z.iter().flat_map(|r| r[1..].iter().copied())
    }
}

/// Clamps to `[0, 1]`, enforces `z` non-increasing and slopes `>= -1`.
fn repair_row(k: &[f64], z: &mut [f64], strict: bool) -> std::result::Result<(), String> {
    for (j, v) in z.iter_mut().enumerate() {
        if !v.is_finite() {
            return Err(format!("non-finite price at column {j}"));
        }
        let excess = (*v - 1.0).max(-*v);
        if strict && excess > REPAIR_TOLERANCE {
            return Err(format!("normalised price {v} outside [0, 1] at column {j}"));
        }
        *v = v.clamp(0.0, 1.0);
    }
    let worst_rise = z.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if strict && worst_rise > REPAIR_TOLERANCE {
        return Err(format!("price rises by {worst_rise:.3e} with strike"));
    }
    if worst_rise > 0.0 {
        pava_non_increasing(z);
    }
    // vertical spreads cannot be worth more than the strike gap
    for j in 1..z.len() {
        let floor = z[j - 1] - (k[j] - k[j - 1]);
        if z[j] < floor {
            if strict && floor - z[j] > REPAIR_TOLERANCE {
                return Err(format!(
                    "call spread over [{}, {}] exceeds its strike width",
                    k[j - 1],
                    k[j]
                ));
            }
            z[j] = floor;
        }
    }
    Ok(())
}

/// Least-squares projection onto non-increasing sequences (pool adjacent
/// violators, equal weights).
pub fn pava_non_increasing(values: &mut [f64]) {
    let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(values.len());
    for &v in values.iter() {
        let mut sum = v;
        let mut count = 1usize;
        while let Some(&(prev_sum, prev_count)) = blocks.last() {
            if prev_sum / prev_count as f64 >= sum / count as f64 {
                break;
            }
            sum += prev_sum;
            count += prev_count;
            blocks.pop();
        }
        blocks.push((sum, count));
    }
    let mut i = 0;
    for (sum, count) in blocks {
        let mean = sum / count as f64;
        for v in &mut values[i..i + count] {
            *v = mean;
        }
        i += count;
    }
}

/// Normalised surface of an observation. Strikes are read as forward
/// moneyness, so `z = C(K = k S e^{rτ}) e^{rτ} / S = black_call(k, σ√τ)`.
pub fn normalize(obs: &SurfaceObservation) -> Result<NormalizedSurface> {
    let grid = &obs.grid;
    let rows = grid
        .expiries()
        .iter()
        .zip(&obs.vols)
        .map(|(&tau, vols)| {
            grid.moneyness()
                .iter()
                .zip(vols)
                .map(|(&k, &vol)| black_call(k, vol * tau.sqrt()))
                .collect()
        })
        .collect();
    NormalizedSurface::from_market(grid.clone(), rows).map_err(|e| match e {
        Error::Arbitrage { expiry, message } => Error::Arbitrage {
            expiry,
            message: format!("{}: {message}", obs.date),
        },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(spot: f64, rate: f64, vol: f64) -> SurfaceObservation {
        let grid = OptionGrid::default();
        let vols = vec![vec![vol; 7]; 7];
        SurfaceObservation::new(
            NaiveDate::from_ymd_opt(2020, 1, 2).unwrap(),
            spot,
            rate,
            grid,
            vols,
        )
        .unwrap()
    }

    #[test]
    fn pava_matches_hand_example() {
        let mut v = [1.0, 0.5, 0.7, 0.2];
        pava_non_increasing(&mut v);
        assert_eq!(v, [1.0, 0.6, 0.6, 0.2]);
    }

    #[test]
    fn zero_strike_column_is_exactly_one() {
        let s = normalize(&flat(100.0, 0.05, 0.3)).unwrap();
        assert!(s.rows().iter().all(|r| r[0] == 1.0));
        assert_eq!(s.k()[0], 0.0);
    }

    #[test]
    fn normalisation_ignores_spot_scale() {
        let a = normalize(&flat(1.0, 0.0, 0.2)).unwrap();
        let b = normalize(&flat(100.0, 0.0, 0.2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tiny_rise_is_repaired_large_rise_rejected() {
        let grid = OptionGrid::new(vec![1.0], vec![0.9, 1.0, 1.1]).unwrap();
        let ok = NormalizedSurface::from_market(grid.clone(), vec![vec![0.15, 0.08, 0.0800005]])
            .unwrap();
        let r = &ok.rows()[0];
        assert!(r[2] >= r[3] && (r[2] - 0.08000025).abs() < 1e-12);
        assert!(NormalizedSurface::from_market(grid, vec![vec![0.15, 0.08, 0.09]]).is_err());
    }
}
