//! Market inputs: the option grid, Black pricing and implied volatility,
//! normalised call surfaces and the CSV loader.

mod black;
mod grid;
mod loader;
mod surface;

pub use black::{black_call, implied_total_vol, implied_vol, vol_to_price};
pub use grid::OptionGrid;
pub use loader::{load_series, load_series_with_report, write_series, DroppedDate, LoadReport};
pub use surface::{normalize, pava_non_increasing, NormalizedSurface, SurfaceObservation};

/// Tolerance up to which small static-arbitrage violations in quoted
/// surfaces are repaired rather than rejected.
pub const REPAIR_TOLERANCE: f64 = 1e-6;

/// One trading day in years.
pub const TRADING_DAY: f64 = 1.0 / 252.0;
