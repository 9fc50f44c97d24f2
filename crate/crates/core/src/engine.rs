//! The forgetting recursion
//!
//! `ℓ_j(t) = β ℓ_j(t-h) + log p_j(X_{t-h}, X_t) - Q(φ_j(X_t), Y_t)`
//!
//! and posterior weights `π_j(t) ∝ exp(ℓ_j(t))`.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{normalize, OptionGrid, SurfaceObservation, TRADING_DAY};
use crate::models::{
    normalized_delta_surface, normalized_surface, transition_law, ModelFamily, ModelInstance,
    TransitionLaw, DEFAULT_LOG_DENSITY_FLOOR,
};
use crate::penalty::{flat_slopes, PenaltyMode, PenaltyWeights, DEFAULT_NAIVE_WEIGHT};

/// Which evidence enters the recursion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LikelihoodMode {
    MovesOnly,
    OptionsOnly,
    Combined,
}

impl LikelihoodMode {
    pub const ALL: [LikelihoodMode; 3] = [
        LikelihoodMode::MovesOnly,
        LikelihoodMode::OptionsOnly,
        LikelihoodMode::Combined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LikelihoodMode::MovesOnly => "moves",
            LikelihoodMode::OptionsOnly => "options",
            LikelihoodMode::Combined => "combined",
        }
    }

    fn uses_moves(self) -> bool {
        self != LikelihoodMode::OptionsOnly
    }

    fn uses_options(self) -> bool {
        self != LikelihoodMode::MovesOnly
    }
}

impl FromStr for LikelihoodMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "moves" | "moves_only" => Ok(LikelihoodMode::MovesOnly),
            "options" | "options_only" => Ok(LikelihoodMode::OptionsOnly),
            "combined" => Ok(LikelihoodMode::Combined),
            other => Err(Error::invalid(format!("unknown likelihood mode {other:?}"))),
        }
    }
}

/// Prior over instances at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyPrior {
    /// Every instance equally likely.
    Uniform,
    /// Every family equally likely, split evenly over its instances.
    EqualFamily,
}

impl FromStr for FamilyPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "uniform" | "instance" => Ok(FamilyPrior::Uniform),
            "family" | "equal_family" => Ok(FamilyPrior::EqualFamily),
            other => Err(Error::invalid(format!("unknown family prior {other:?}"))),
        }
    }
}

impl FamilyPrior {
    pub fn name(self) -> &'static str {
        match self {
            FamilyPrior::Uniform => "uniform",
            FamilyPrior::EqualFamily => "family",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Forgetting factor in `(0, 1]`.
    pub beta: f64,
    /// Step between observations in years.
    pub h: f64,
    pub lambda: f64,
    pub mode: LikelihoodMode,
    pub penalty: PenaltyMode,
    pub naive_weight: f64,
    pub log_density_floor: f64,
    pub family_prior: FamilyPrior,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            beta: 0.99,
            h: TRADING_DAY,
            lambda: 1.0,
            mode: LikelihoodMode::Combined,
            penalty: PenaltyMode::Structured,
            naive_weight: DEFAULT_NAIVE_WEIGHT,
            log_density_floor: DEFAULT_LOG_DENSITY_FLOOR,
            family_prior: FamilyPrior::Uniform,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        // β = 0 is accepted as the memoryless limit
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!(
                "beta {} must lie in [0, 1]",
                self.beta
            )));
        }
        if !(self.h > 0.0) {
            return Err(Error::invalid(format!(
                "step h {} must be positive",
                self.h
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!(
                "lambda {} must be positive",
                self.lambda
            )));
        }
        if !(self.naive_weight > 0.0) {
            return Err(Error::invalid("naive weight must be positive"));
        }
        if !self.log_density_floor.is_finite() {
            return Err(Error::invalid("log-density floor must be finite"));
        }
        Ok(())
    }
}

/// A market observation reduced to what the recursion needs.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDay {
    pub date: NaiveDate,
    pub log_price: f64,
    pub rate: f64,
    grid: OptionGrid,
    quoted: Vec<f64>,
    slopes: Vec<f64>,
}

impl MarketDay {
    pub fn new(obs: &SurfaceObservation) -> Result<Self> {
        let s = normalize(obs)?;
        Ok(MarketDay {
            date: obs.date,
            log_price: obs.log_price,
            rate: obs.rate,
            grid: obs.grid.clone(),
            quoted: s.quoted().collect(),
            slopes: flat_slopes(&s),
        })
    }
}

/// A model surface reduced to quoted values and strike slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSurface {
    pub quoted: Vec<f64>,
    pub slopes: Vec<f64>,
}

struct Prepared {
    instance: ModelInstance,
    law: TransitionLaw,
    rate_dependent: bool,
    surfaces: Mutex<HashMap<u64, Arc<ModelSurface>>>,
    deltas: Mutex<HashMap<u64, Arc<Vec<f64>>>>,
}

/// Instances with their transition laws built and surfaces cached.
///
/// Normalised model surfaces do not depend on the spot, so each is priced
/// once; only CEV below unit elasticity also depends on the rate and is
/// cached per distinct rate.
pub struct PreparedUniverse {
    grid: OptionGrid,
    h: f64,
    weights: PenaltyWeights,
    items: Vec<Prepared>,
}

/// Per-instance evidence for one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    /// Floored transition log-density.
    pub log_density: f64,
    /// Surface penalty, already scaled (λ for structured mode).
    pub penalty: f64,
}

impl Increment {
    pub fn contribution(&self, mode: LikelihoodMode) -> f64 {
        let mut c = 0.0;
        if mode.uses_moves() {
            c += self.log_density;
        }
        if mode.uses_options() {
            c -= self.penalty;
        }
        c
    }
}

fn rate_key(dependent: bool, rate: f64) -> u64 {
    if dependent {
        rate.to_bits()
    } else {
        0
    }
}

impl PreparedUniverse {
    /// Builds laws and base surfaces; any failure is an error naming the instance.
    pub fn new(
        instances: Vec<ModelInstance>,
        grid: &OptionGrid,
        h: f64,
        rate: f64,
    ) -> Result<Self> {
        let (universe, failures) = Self::build(instances, grid, h, rate);
        match failures.into_iter().next() {
            Some((index, instance, source)) => Err(Error::Instance {
                index,
                instance: instance.to_string(),
                source: Box::new(source),
            }),
            None => Ok(universe),
        }
    }

    /// Like [`PreparedUniverse::new`] but drops failing instances, returning
    /// them with their original index.
    pub fn new_lenient(
        instances: Vec<ModelInstance>,
        grid: &OptionGrid,
        h: f64,
        rate: f64,
    ) -> (Self, Vec<(usize, ModelInstance, Error)>) {
        Self::build(instances, grid, h, rate)
    }

    fn build(
        instances: Vec<ModelInstance>,
        grid: &OptionGrid,
        h: f64,
        rate: f64,
    ) -> (Self, Vec<(usize, ModelInstance, Error)>) {
        let built: Vec<std::result::Result<Prepared, (ModelInstance, Error)>> = instances
            .into_par_iter()
            .map(|instance| {
                let prepare = || -> Result<Prepared> {
                    let law = transition_law(&instance, h)?;
                    let rate_dependent =
                        instance.family == ModelFamily::Cev && instance.params[1] < 1.0;
                    let s = normalized_surface(&instance, grid, rate)?;
                    let surface = ModelSurface {
                        quoted: s.quoted().collect(),
                        slopes: flat_slopes(&s),
                    };
                    let mut surfaces = HashMap::new();
                    surfaces.insert(rate_key(rate_dependent, rate), Arc::new(surface));
                    Ok(Prepared {
                        instance: instance.clone(),
                        law,
                        rate_dependent,
                        surfaces: Mutex::new(surfaces),
                        deltas: Mutex::new(HashMap::new()),
                    })
                };
                prepare().map_err(|e| (instance.clone(), e))
            })
            .collect();
        let mut items = Vec::new();
        let mut failures = Vec::new();
        for (i, b) in built.into_iter().enumerate() {
            match b {
                Ok(p) => items.push(p),
                Err((inst, e)) => failures.push((i, inst, e)),
            }
        }
        (
            PreparedUniverse {
                grid: grid.clone(),
                h,
                weights: PenaltyWeights::new(grid),
                items,
            },
            failures,
        )
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn grid(&self) -> &OptionGrid {
        &self.grid
    }

    pub fn instance(&self, i: usize) -> &ModelInstance {
        &self.items[i].instance
    }

    pub fn instances(&self) -> impl Iterator<Item = &ModelInstance> {
        self.items.iter().map(|p| &p.instance)
    }

    pub fn families(&self) -> Vec<ModelFamily> {
        self.items.iter().map(|p| p.instance.family).collect()
    }

    pub fn law(&self, i: usize) -> &TransitionLaw {
        &self.items[i].law
    }

    fn tagged<T>(&self, i: usize, r: Result<T>) -> Result<T> {
        r.map_err(|e| Error::Instance {
            index: i,
            instance: self.items[i].instance.to_string(),
            source: Box::new(e),
        })
    }

    /// Model surface of instance `i` at `rate`.
    pub fn surface(&self, i: usize, rate: f64) -> Result<Arc<ModelSurface>> {
        let p = &self.items[i];
        let key = rate_key(p.rate_dependent, rate);
        if let Some(s) = p.surfaces.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = self.tagged(i, normalized_surface(&p.instance, &self.grid, rate))?;
        let s = Arc::new(ModelSurface {
            quoted: s.quoted().collect(),
            slopes: flat_slopes(&s),
        });
        p.surfaces
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&s));
        Ok(s)
    }

    /// Grid deltas of instance `i` at `rate`, expiry-major.
    pub fn deltas(&self, i: usize, rate: f64) -> Result<Arc<Vec<f64>>> {
        let p = &self.items[i];
        let key = rate_key(p.rate_dependent, rate);
        if let Some(d) = p.deltas.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(d));
        }
        let d = self.tagged(i, normalized_delta_surface(&p.instance, &self.grid, rate))?;
        let d = Arc::new(d.into_iter().flatten().collect::<Vec<_>>());
        p.deltas
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&d));
        Ok(d)
    }

    fn check_grid(&self, day: &MarketDay) -> Result<()> {
        if day.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    fn log_density(&self, i: usize, prev: &MarketDay, curr: &MarketDay, floor: f64) -> f64 {
        let y = curr.log_price - prev.log_price - prev.rate * self.h;
        let v = self.items[i].law.log_density(y);
        if v.is_nan() {
            floor
        } else {
            v.max(floor)
        }
    }

    /// Evidence of every instance for the step `prev -> curr`.
    pub fn increments(
        &self,
        prev: &MarketDay,
        curr: &MarketDay,
        cfg: &EngineConfig,
    ) -> Result<Vec<Increment>> {
        self.check_grid(curr)?;
        (0..self.items.len())
            .into_par_iter()
            .map(|i| {
                let surface = self.surface(i, curr.rate)?;
                let penalty = match cfg.penalty {
                    PenaltyMode::Structured => {
                        cfg.lambda * self.weights.quadratic(&surface.slopes, &curr.slopes)
                    }
                    PenaltyMode::Naive => {
                        let w2 = cfg.naive_weight * cfg.naive_weight;
                        surface
                            .quoted
                            .iter()
                            .zip(&curr.quoted)
                            .map(|(z, y)| (y - z) * (y - z) / w2)
                            .sum()
                    }
                };
                Ok(Increment {
                    log_density: self.log_density(i, prev, curr, cfg.log_density_floor),
                    penalty,
                })
            })
            .collect()
    }

    /// Floored log-density and structured penalty at λ = 1 for a subset.
    pub(crate) fn raw_terms(
        &self,
        prev: &MarketDay,
        curr: &MarketDay,
        members: &[usize],
        floor: f64,
    ) -> Result<Vec<(f64, f64)>> {
        self.check_grid(curr)?;
        members
            .par_iter()
            .map(|&i| {
                let surface = self.surface(i, curr.rate)?;
                Ok((
                    self.log_density(i, prev, curr, floor),
                    self.weights.quadratic(&surface.slopes, &curr.slopes),
                ))
            })
            .collect()
    }
}

/// Accumulated log-likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodState {
    pub ell: Vec<f64>,
    /// Number of steps taken.
    pub t: usize,
    pub config: EngineConfig,
}

impl LikelihoodState {
    /// `ℓ_j(0) = 0` for every instance.
    pub fn new(n: usize, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        Ok(LikelihoodState {
            ell: vec![0.0; n],
            t: 0,
            config,
        })
    }

    /// Folds one step of increments into the state.
    pub fn apply(&mut self, increments: &[Increment]) -> Result<()> {
        if increments.len() != self.ell.len() {
            return Err(Error::invalid(format!(
                "{} increments for {} instances",
                increments.len(),
                self.ell.len()
            )));
        }
        let beta = self.config.beta;
        let mode = self.config.mode;
        for (l, inc) in self.ell.iter_mut().zip(increments) {
            *l = beta * *l + inc.contribution(mode);
        }
        self.t += 1;
        Ok(())
    }

    pub fn step_day(
        &mut self,
        prev: &MarketDay,
        curr: &MarketDay,
        universe: &PreparedUniverse,
    ) -> Result<()> {
        let inc = universe.increments(prev, curr, &self.config)?;
        self.apply(&inc)
    }

    /// One step of the recursion between consecutive observations.
    pub fn step(
        &self,
        prev: &SurfaceObservation,
        curr: &SurfaceObservation,
        universe: &PreparedUniverse,
    ) -> Result<LikelihoodState> {
        let mut next = self.clone();
        next.step_day(&MarketDay::new(prev)?, &MarketDay::new(curr)?, universe)?;
        Ok(next)
    }

    pub fn posterior(&self, universe: &PreparedUniverse) -> Posterior {
        Posterior::new(&self.ell, &universe.families(), self.config.family_prior)
    }
}

/// Normalised weights over instances, with per-family totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub weights: Vec<f64>,
    pub by_family: BTreeMap<ModelFamily, f64>,
}

impl Posterior {
    /// Softmax of `ℓ` plus the log prior, with the maximum subtracted first.
    pub fn new(ell: &[f64], families: &[ModelFamily], prior: FamilyPrior) -> Self {
        assert_eq!(ell.len(), families.len(), "one family per instance");
        let mut counts: BTreeMap<ModelFamily, usize> = BTreeMap::new();
        for f in families {
            *counts.entry(*f).or_default() += 1;
        }
        let scores: Vec<f64> = ell
            .iter()
            .zip(families)
            .map(|(l, f)| match prior {
                FamilyPrior::Uniform => *l,
                FamilyPrior::EqualFamily => l - (counts[f] as f64).ln(),
            })
            .collect();
        let peak = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = scores.iter().map(|s| (s - peak).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let mut by_family: BTreeMap<ModelFamily, f64> = counts.keys().map(|f| (*f, 0.0)).collect();
        for (w, f) in weights.iter().zip(families) {
            *by_family.get_mut(f).expect("counted") += w;
        }
        Posterior { weights, by_family }
    }

    pub fn family_weight(&self, f: ModelFamily) -> f64 {
        self.by_family.get(&f).copied().unwrap_or(0.0)
    }
}

/// Runs the recursion over `days`, calling `observe` with the state at the
/// first day (all zeros) and after every step.
pub fn run_series(
    days: &[MarketDay],
    universe: &PreparedUniverse,
    config: &EngineConfig,
    mut observe: impl FnMut(usize, &LikelihoodState) -> Result<()>,
) -> Result<LikelihoodState> {
    let mut state = LikelihoodState::new(universe.len(), config.clone())?;
    if days.is_empty() {
        return Ok(state);
    }
    observe(0, &state)?;
    for t in 1..days.len() {
        state.step_day(&days[t - 1], &days[t], universe)?;
        observe(t, &state)?;
    }
    Ok(state)
}
