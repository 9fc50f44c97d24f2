//! Call surfaces and deltas over an option grid.
//!
//! Grid moneyness is forward moneyness: the strike of column `k` at expiry
//! `τ` is `k S e^{rτ}`, so the normalised price `z = C / S` is
//! `E[(S_τ/F_τ - k)^+]`.

use rayon::prelude::*;

use super::cos::cos_calls;
use super::sabr::hagan_vol;
use super::vg::GammaClock;
use super::{cev, ModelFamily, ModelInstance};
use crate::error::{Error, Result};
use crate::market_data::{black_call, NormalizedSurface, OptionGrid};

/// Relative spot bump for finite-difference deltas.
const DELTA_BUMP: f64 = 1e-4;

/// Normalised prices at strikes fixed in absolute terms while the spot moves
/// to `spot_ratio` times the reference spot. Rows exclude the `k_0` column.
fn rows(m: &ModelInstance, grid: &OptionGrid, rate: f64, spot_ratio: f64) -> Result<Vec<Vec<f64>>> {
    m.check()?;
    let ks: Vec<f64> = grid.moneyness().iter().map(|k| k / spot_ratio).collect();
    let x = &m.params;
    grid.expiries()
        .iter()
        .map(|&tau| -> Result<Vec<f64>> {
            match m.family {
                ModelFamily::BlackScholes => Ok(ks
                    .iter()
                    .map(|&k| black_call(k, x[0] * tau.sqrt()))
                    .collect()),
                ModelFamily::Cev => {
                    let (sigma, beta) = (x[0] * spot_ratio.powf(x[1] - 1.0), x[1]);
                    if beta >= 1.0 {
                        let w = sigma * tau.sqrt();
                        Ok(ks.iter().map(|&k| black_call(k, w)).collect())
                    } else {
                        let v = cev::clock(sigma, beta, rate, tau);
                        Ok(ks.iter().map(|&k| cev::call(beta, v, k)).collect())
                    }
                }
                ModelFamily::Sabr => {
                    let (beta, rho, nu) = (m.get("beta"), m.get("rho"), m.get("nu"));
                    let alpha = m.get("alpha") * spot_ratio.powf(beta - 1.0);
                    ks.iter()
                        .map(|&k| {
                            let vol = hagan_vol(1.0, k, tau, alpha, beta, rho, nu);
                            if !(vol.is_finite() && vol > 0.0) {
                                return Err(Error::Quadrature {
                                    family: m.family,
                                    params: m.to_string(),
                                    message: format!("expansion gives vol {vol} at ({tau}, {k})"),
                                });
                            }
                            Ok(black_call(k, vol * tau.sqrt()))
                        })
                        .collect()
                }
                ModelFamily::VarianceGamma => {
                    let clock = GammaClock::new(m, tau);
                    Ok(ks.iter().map(|&k| clock.call(k)).collect())
                }
                _ => cos_calls(m, tau, &ks),
            }
        })
        .collect()
}

/// Model surface in normalised units; depends on `rate` only for CEV.
pub fn normalized_surface(
    m: &ModelInstance,
    grid: &OptionGrid,
    rate: f64,
) -> Result<NormalizedSurface> {
    Ok(NormalizedSurface::from_model(
        grid.clone(),
        rows(m, grid, rate, 1.0)?,
    ))
}

/// Call prices `S z` over the grid (the model's price vector).
pub fn price_surface(
    m: &ModelInstance,
    spot: f64,
    rate: f64,
    grid: &OptionGrid,
) -> Result<Vec<Vec<f64>>> {
    let z = rows(m, grid, rate, 1.0)?;
    Ok(z.into_iter()
        .map(|r| r.into_iter().map(|v| spot * v).collect())
        .collect())
}

/// Call prices through the cosine expansion of the characteristic function,
/// whatever route [`price_surface`] takes for the family.
pub fn cf_price_surface(m: &ModelInstance, spot: f64, grid: &OptionGrid) -> Result<Vec<Vec<f64>>> {
    m.check()?;
    if !m.family.has_char_fn() {
        return Err(Error::invalid(format!(
            "{} has no characteristic function",
            m.family
        )));
    }
    grid.expiries()
        .iter()
        .map(|&tau| {
            Ok(cos_calls(m, tau, grid.moneyness())?
                .into_iter()
                .map(|v| spot * v)
                .collect())
        })
        .collect()
}

/// Spot deltas of the grid calls with strikes held fixed, by central
/// differences with relative bump 1e-4, clamped to `[0, 1]`.
pub fn normalized_delta_surface(
    m: &ModelInstance,
    grid: &OptionGrid,
    rate: f64,
) -> Result<Vec<Vec<f64>>> {
    let (up, down) = [1.0 + DELTA_BUMP, 1.0 - DELTA_BUMP]
        .par_iter()
        .map(|&ratio| rows(m, grid, rate, ratio))
        .collect::<Result<Vec<_>>>()
        .map(|mut v| {
            let down = v.pop().expect("two bumps");
            let up = v.pop().expect("two bumps");
            (up, down)
        })?;
    Ok(up
        .iter()
        .zip(&down)
        .map(|(ru, rd)| {
            ru.iter()
                .zip(rd)
                .map(|(zu, zd)| {
                    ((1.0 + DELTA_BUMP) * zu - (1.0 - DELTA_BUMP) * zd) / (2.0 * DELTA_BUMP)
                })
                .map(|d| d.clamp(0.0, 1.0))
                .collect()
        })
        .collect())
}

/// Deltas are scale free, so the spot only enters through the grid strikes.
pub fn delta_surface(
    m: &ModelInstance,
    _spot: f64,
    rate: f64,
    grid: &OptionGrid,
) -> Result<Vec<Vec<f64>>> {
    normalized_delta_surface(m, grid, rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::norm_cdf;

    fn inst(line: &str) -> ModelInstance {
        ModelInstance::parse_line(line).unwrap()
    }

    #[test]
    fn black_scholes_delta_is_n_d1() {
        let grid = OptionGrid::default();
        let d = delta_surface(&inst("black_scholes,sigma=0.2"), 100.0, 0.02, &grid).unwrap();
        for (m, &tau) in grid.expiries().iter().enumerate() {
            for (j, &k) in grid.moneyness().iter().enumerate() {
                let w = 0.2 * tau.sqrt();
                let d1 = (-k.ln() + 0.5 * w * w) / w;
                assert!((d[m][j] - norm_cdf(d1)).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn every_family_prices_a_monotone_surface() {
        let grid = OptionGrid::default();
        for f in ModelFamily::ALL {
            let p = price_surface(&f.typical(), 1.0, 0.01, &grid).unwrap();
            for row in &p {
                assert!(row[0] >= row[6], "{f}");
                for w in row.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "{f}");
                }
            }
        }
    }
}
