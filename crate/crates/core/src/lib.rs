//! Exact Bayesian model averaging over a fixed, finite universe of
//! option-pricing models.
//!
//! Each day every model instance is scored on two things: how likely the
//! observed move of the underlying was under its one-step transition law, and
//! how far its call-price surface sits from the market surface, measured by a
//! quadratic penalty on strike slopes. Scores accumulate with geometric
//! forgetting and turn into posterior weights by a softmax.
//!
//! The crate is organised bottom up:
//!
//! - [`market_data`]: option grids, Black pricing, normalised surfaces, CSV input.
//! - [`models`]: the nine model families, characteristic functions, pricing
//!   routes and one-day transition laws.
//! - [`penalty`]: structured and naive surface penalties, λ calibration.
//! - [`engine`]: the forgetting recursion and posterior weights.
//! - [`universe`]: snapshot calibration, grid spanning and pruning.
//! - [`products`]: predictive densities, mixture prices and hedges.
//! - [`synth`] and [`backtest`]: synthetic data and the end-to-end run.

pub mod backtest;
pub mod engine;
mod error;
pub mod market_data;
pub mod models;
pub mod penalty;
pub mod products;
pub mod special;
pub mod synth;
pub mod universe;

pub use engine::{
    EngineConfig, FamilyPrior, Increment, LikelihoodMode, LikelihoodState, Posterior,
    PreparedUniverse,
};
pub use error::{Error, ErrorCategory, Result};
pub use market_data::{
    implied_vol, load_series, normalize, vol_to_price, NormalizedSurface, OptionGrid,
    SurfaceObservation,
};
pub use models::{
    char_fn, delta_surface, density_from_cf, price_surface, transition_log_density, DensityTable,
    ModelFamily, ModelInstance, TransitionLaw,
};
pub use penalty::{
    calibrate_lambda, penalty_naive, penalty_structured, strike_slopes, LambdaScope, PenaltyConfig,
    PenaltyMode,
};
pub use products::{mixture_delta, mixture_price, predictive_density, PriceDistribution};
pub use synth::{generate_synthetic, SynthConfig};
pub use universe::{
    build_universe, least_squares_fit, prune, read_universe, span_grid, write_universe,
    BuildConfig, CalibrationSnapshot, UniverseSpec,
};
