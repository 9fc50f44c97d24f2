//! Snapshot calibration: one family fitted to one day's surface and a
//! trailing window of daily returns.
//!
//! The objective is the structured penalty at λ = 1 plus the squared
//! distance between model and empirical bin probabilities of the daily
//! log-return. Free and state slots are searched inside the family's fit box
//! through a logistic transform, so the simplex search is unconstrained.

use argmin::core::{CostFunction, Executor, State, TerminationReason, TerminationStatus};
use argmin::solver::neldermead::NelderMead;
use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{normalize, SurfaceObservation, TRADING_DAY};
use crate::models::{bin_masses, normalized_surface, ModelFamily, ModelInstance, Role};
use crate::penalty::{flat_slopes, PenaltyWeights};

/// Objective assigned to inadmissible or unpriceable points.
const WALL: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Simplex iterations per start.
    pub iterations: u64,
    /// Starts after the first, each a jitter of the best point so far.
    pub restarts: usize,
    pub bins: usize,
    /// Half-width of the histogram range in sample standard deviations.
    pub width_sds: f64,
    /// Weight of the histogram term against the surface term.
    pub histogram_weight: f64,
    /// Minimum number of daily returns in the window.
    pub min_returns: usize,
    pub h: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            iterations: 500,
            restarts: 5,
            bins: 41,
            width_sds: 6.0,
            histogram_weight: 1.0,
            min_returns: 60,
            h: TRADING_DAY,
            seed: 0,
        }
    }
}

/// Empirical bin probabilities of daily log-returns.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnHistogram {
    pub edges: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ReturnHistogram {
    /// Bins `returns` on `bins` equal cells over the sample mean plus or
    /// minus `width_sds` sample standard deviations.
    pub fn new(returns: &[f64], bins: usize, width_sds: f64) -> Result<Self> {
        let n = returns.len();
        if n < 2 || bins == 0 {
            return Err(Error::invalid("need at least two returns and one bin"));
        }
        let mean = returns.iter().sum::<f64>() / n as f64;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::invalid("returns window has no dispersion"));
        }
        let lo = mean - width_sds * sd;
        let width = 2.0 * width_sds * sd / bins as f64;
        let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0usize; bins];
        for r in returns {
            let b = ((r - lo) / width).floor();
            if b >= 0.0 && (b as usize) < bins {
                counts[b as usize] += 1;
            }
        }
        Ok(ReturnHistogram {
            edges,
            probabilities: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        })
    }

    /// `Σ_b (P_b - E_b)^2` for the model's law of the return over `h`.
    pub fn misfit(&self, m: &ModelInstance, h: f64, rate: f64) -> Result<f64> {
        // model laws are in the martingale frame
        let shifted: Vec<f64> = self.edges.iter().map(|e| e - rate * h).collect();
        let masses = bin_masses(m, h, &shifted)?;
        Ok(masses
            .iter()
            .zip(&self.probabilities)
            .map(|(p, e)| (p - e) * (p - e))
            .sum())
    }
}

/// Daily log-returns of a log-price window.
pub fn window_returns(log_prices: &[f64]) -> Vec<f64> {
    log_prices.windows(2).map(|w| w[1] - w[0]).collect()
}

/// One family's fit to one snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFit {
    pub instance: ModelInstance,
    /// Structured penalty at λ = 1 against the snapshot surface.
    pub surface_residual: f64,
    pub histogram_residual: f64,
    pub objective: f64,
    /// False when every start ran out of iterations.
    pub converged: bool,
}

/// Fitted instances of every family at one date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSnapshot {
    pub date: NaiveDate,
    pub fits: Vec<SnapshotFit>,
}

/// The objective of one family at one snapshot, in box coordinates.
pub struct FitProblem {
    family: ModelFamily,
    /// Slots being searched, with their boxes.
    searched: Vec<(usize, f64, f64)>,
    base: Vec<f64>,
    weights: PenaltyWeights,
    market_slopes: Vec<f64>,
    obs: SurfaceObservation,
    histogram: ReturnHistogram,
    histogram_weight: f64,
    h: f64,
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl FitProblem {
    pub fn new(
        family: ModelFamily,
        obs: &SurfaceObservation,
        log_prices: &[f64],
        cfg: &FitConfig,
    ) -> Result<Self> {
        let returns = window_returns(log_prices);
        if returns.len() < cfg.min_returns {
            return Err(Error::invalid(format!(
                "returns window has {} days, need {}",
                returns.len(),
                cfg.min_returns
            )));
        }
        let histogram = ReturnHistogram::new(&returns, cfg.bins, cfg.width_sds)?;
        let market = normalize(obs)?;
        let slots = family.slots();
        Ok(FitProblem {
            family,
            searched: slots
                .iter()
                .enumerate()
                .filter(|(_, s)| s.role != Role::Fixed && s.fit_hi > s.fit_lo)
                .map(|(i, s)| (i, s.fit_lo, s.fit_hi))
                .collect(),
            base: slots.iter().map(|s| s.typical).collect(),
            weights: PenaltyWeights::new(&obs.grid),
            market_slopes: flat_slopes(&market),
            obs: obs.clone(),
            histogram,
            histogram_weight: cfg.histogram_weight,
            h: cfg.h,
        })
    }

    pub fn dimension(&self) -> usize {
        self.searched.len()
    }

    /// Parameters at unconstrained coordinates `u`.
    pub fn params(&self, u: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (&(i, lo, hi), &ui) in self.searched.iter().zip(u) {
            x[i] = lo + (hi - lo) * logistic(ui);
        }
        x
    }

    /// Coordinates of parameter vector `x`, pulled slightly inside the box.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.searched
            .iter()
            .map(|&(i, lo, hi)| {
                let t = ((x[i] - lo) / (hi - lo)).clamp(1e-6, 1.0 - 1e-6);
                (t / (1.0 - t)).ln()
            })
            .collect()
    }

    /// Surface and histogram terms of an instance.
    pub fn residuals(&self, m: &ModelInstance) -> Result<(f64, f64)> {
        let s = normalized_surface(m, &self.obs.grid, self.obs.rate)?;
        let q = self
            .weights
            .quadratic(&flat_slopes(&s), &self.market_slopes);
        let hist = self.histogram.misfit(m, self.h, self.obs.rate)?;
        Ok((q, hist))
    }

    fn evaluate(&self, x: Vec<f64>) -> f64 {
        let m = ModelInstance {
            family: self.family,
            params: x,
        };
        if !m.is_admissible() {
            return WALL;
        }
        match self.residuals(&m) {
            Ok((q, hist)) if (q + hist).is_finite() => q + self.histogram_weight * hist,
            _ => WALL,
        }
    }
}

/// Runs one simplex search from `start`; returns the best point, its value
/// and whether the simplex collapsed before the budget ran out.
fn simplex(
    problem: &FitProblem,
    start: Vec<f64>,
    iterations: u64,
) -> Result<(Vec<f64>, f64, bool)> {
    let mut vertices = vec![start.clone()];
    for i in 0..start.len() {
        let mut v = start.clone();
        v[i] += 0.5;
        vertices.push(v);
    }
    let solver = NelderMead::new(vertices)
        .with_sd_tolerance(1e-12)
        .map_err(|e| Error::invalid(format!("simplex setup: {e}")))?;
    let res = Executor::new(problem, solver)
        .configure(|s| s.max_iters(iterations))
        .run()
        .map_err(|e| Error::invalid(format!("simplex search: {e}")))?;
    let state = res.state();
    let converged = matches!(
        state.get_termination_status(),
        TerminationStatus::Terminated(TerminationReason::SolverConverged)
    );
    let best = state.get_best_param().cloned().unwrap_or(start);
    Ok((best, state.get_best_cost(), converged))
}

impl CostFunction for &FitProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, u: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.evaluate(self.params(u)))
    }
}

/// Fits `family` to the surface of `obs` and the returns in `log_prices`,
/// the log-prices of the window ending at the snapshot.
///
/// The first start is the family's typical point; each restart jitters the
/// best point so far with a fixed seed, so the result is deterministic.
pub fn least_squares_fit(
    family: ModelFamily,
    obs: &SurfaceObservation,
    log_prices: &[f64],
    cfg: &FitConfig,
) -> Result<SnapshotFit> {
    let problem = FitProblem::new(family, obs, log_prices, cfg)?;
    let mut best_u = problem.coordinates(&problem.base);
    let mut best = problem.evaluate(problem.params(&best_u));
    let mut converged = false;
    if problem.dimension() > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(family as u64);
        let jitter = Normal::new(0.0, 0.5).expect("valid normal");
        for start in 0..=cfg.restarts {
            let from = if start == 0 {
                best_u.clone()
            } else {
                best_u.iter().map(|u| u + jitter.sample(&mut rng)).collect()
            };
            let (u, value, done) = simplex(&problem, from, cfg.iterations)?;
            converged |= done;
            if value < best {
                best = value;
                best_u = u;
            }
        }
    } else {
        converged = true;
    }
    let instance = ModelInstance {
        family,
        params: problem.params(&best_u),
    };
    let (q, hist) = problem.residuals(&instance).map_err(|e| Error::Instance {
        index: 0,
        instance: instance.to_string(),
        source: Box::new(e),
    })?;
    Ok(SnapshotFit {
        instance,
        surface_residual: q,
        histogram_residual: hist,
        objective: q + cfg.histogram_weight * hist,
        converged,
    })
}

/// Fits every family at `obs`, in parallel across families.
pub fn calibrate_snapshot(
    families: &[ModelFamily],
    obs: &SurfaceObservation,
    log_prices: &[f64],
    cfg: &FitConfig,
) -> Result<CalibrationSnapshot> {
    use rayon::prelude::*;
    let fits = families
        .par_iter()
        .map(|&f| least_squares_fit(f, obs, log_prices, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibrationSnapshot {
        date: obs.date,
        fits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_return_inside_the_range() {
        let r: Vec<f64> = (0..100).map(|i| (i as f64 - 49.5) * 1e-4).collect();
        let h = ReturnHistogram::new(&r, 41, 6.0).unwrap();
        assert_eq!(h.edges.len(), 42);
        assert!((h.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logistic_coordinates_round_trip() {
        let obs = crate::synth::generate_synthetic(
            &ModelFamily::Heston.typical(),
            &crate::synth::SynthConfig {
                n_days: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let lp: Vec<f64> = (0..61).map(|i| (i as f64 * 0.37).sin() * 0.01).collect();
        let p = FitProblem::new(ModelFamily::Heston, &obs[1], &lp, &FitConfig::default()).unwrap();
        assert_eq!(p.dimension(), 5);
        let x = vec![3.0, 0.05, 0.5, -0.6, 0.03];
        let back = p.params(&p.coordinates(&x));
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn short_windows_are_rejected() {
        let obs = crate::synth::generate_synthetic(
            &ModelFamily::BlackScholes.typical(),
            &Default::default(),
        )
        .unwrap();
        let lp = vec![0.0; 30];
        assert!(least_squares_fit(
            ModelFamily::BlackScholes,
            &obs[0],
            &lp,
            &FitConfig::default()
        )
        .is_err());
    }
}
