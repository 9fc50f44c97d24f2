//! Universe construction: snapshot fits, grid spanning and pruning.

mod fit;
mod prune;
mod span;

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use fit::{
    calibrate_snapshot, least_squares_fit, window_returns, CalibrationSnapshot, FitConfig,
    FitProblem, ReturnHistogram, SnapshotFit,
};
pub use prune::{prune, FamilySelection, PruneLogRow, PruneReport};
pub use span::{axis, ranges, span_grid, UniverseSpec};

use crate::engine::{EngineConfig, MarketDay, PreparedUniverse};
use crate::error::{Error, Result};
use crate::market_data::SurfaceObservation;
use crate::models::{ModelFamily, ModelInstance};
use crate::penalty::{calibrate_lambda_days, LambdaScope};

/// One instance per line in the `family,name=value,...` form.
pub fn universe_text(instances: &[ModelInstance]) -> String {
    let mut s = String::new();
    for m in instances {
        writeln!(s, "{m}").expect("writing to a string");
    }
    s
}

pub fn write_universe(path: &Path, instances: &[ModelInstance]) -> Result<()> {
    std::fs::write(path, universe_text(instances))?;
    Ok(())
}

/// Reads a universe file; blank lines and lines starting with `#` are skipped.
pub fn read_universe(path: &Path) -> Result<Vec<ModelInstance>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let m = ModelInstance::parse_line(line).map_err(|e| Error::Data {
            path: path.to_path_buf(),
            line: i as u64 + 1,
            message: e.to_string(),
        })?;
        out.push(m);
    }
    if out.is_empty() {
        return Err(Error::Data {
            path: path.to_path_buf(),
            line: 0,
            message: "universe file lists no instances".into(),
        });
    }
    Ok(out)
}

/// Hex SHA-256 of the serialised universe.
pub fn universe_hash(instances: &[ModelInstance]) -> String {
    let digest = Sha256::digest(universe_text(instances).as_bytes());
    digest.iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("writing to a string");
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub families: Vec<ModelFamily>,
    /// Number of snapshot dates, spread evenly over the days that have a
    /// full returns window behind them.
    pub snapshots: usize,
    pub fit: FitConfig,
    pub spec: UniverseSpec,
    /// Engine settings for the pruning run.
    pub engine: EngineConfig,
    /// Replace the engine λ by one calibrated on the candidates.
    pub calibrate_lambda: bool,
    /// Instances added to the candidates before pruning.
    pub extra: Vec<ModelInstance>,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            families: ModelFamily::ALL.to_vec(),
            snapshots: 4,
            fit: FitConfig::default(),
            spec: UniverseSpec::default(),
            engine: EngineConfig::default(),
            calibrate_lambda: true,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BuiltUniverse {
    pub snapshots: Vec<CalibrationSnapshot>,
    /// Candidates that priced and entered pruning.
    pub candidates: usize,
    /// Candidates dropped because their law or surface failed.
    pub dropped: Vec<(ModelInstance, String)>,
    /// λ used for pruning.
    pub lambda: f64,
    pub report: PruneReport,
}

impl BuiltUniverse {
    pub fn instances(&self) -> &[ModelInstance] {
        &self.report.kept
    }
}

/// Indices of `count` snapshot days spread over `[window, n - 1]`.
pub fn snapshot_indices(n: usize, window: usize, count: usize) -> Result<Vec<usize>> {
    if count < 2 {
        return Err(Error::invalid("need at least two snapshots"));
    }
    if n == 0 || n - 1 < window {
        return Err(Error::invalid(format!(
            "{n} days leave no room for a {window}-day returns window"
        )));
    }
    let span = (n - 1 - window) as f64;
    let mut idx: Vec<usize> = (0..count)
        .map(|i| window + (i as f64 * span / (count - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    Ok(idx)
}

/// Runs the whole construction over `data`: snapshot fits, grid spanning,
/// optional λ calibration, and pruning.
pub fn build_universe(data: &[SurfaceObservation], cfg: &BuildConfig) -> Result<BuiltUniverse> {
    use rayon::prelude::*;

    cfg.spec.validate()?;
    cfg.engine.validate()?;
    let first = data
        .first()
        .ok_or_else(|| Error::invalid("no observations"))?;
    let idx = snapshot_indices(data.len(), cfg.fit.min_returns, cfg.snapshots)?;
    let log_prices: Vec<f64> = data.iter().map(|o| o.log_price).collect();
    let jobs: Vec<(usize, ModelFamily)> = idx
        .iter()
        .flat_map(|&t| cfg.families.iter().map(move |&f| (t, f)))
        .collect();
    let fits = jobs
        .par_iter()
        .map(|&(t, f)| {
            let window = &log_prices[t - cfg.fit.min_returns..=t];
            least_squares_fit(f, &data[t], window, &cfg.fit)
        })
        .collect::<Result<Vec<_>>>()?;
    let snapshots: Vec<CalibrationSnapshot> = idx
        .iter()
        .zip(fits.chunks(cfg.families.len()))
        .map(|(&t, chunk)| CalibrationSnapshot {
            date: data[t].date,
            fits: chunk.to_vec(),
        })
        .collect();
    for s in &snapshots {
        for f in &s.fits {
            if !f.converged {
                log::warn!(
                    "{} fit at {} hit the iteration budget",
                    f.instance.family,
                    s.date
                );
            }
        }
    }

    let mut candidates = span_grid(&snapshots, &cfg.spec)?;
    for m in &cfg.extra {
        m.check()?;
        if !candidates.contains(m) {
            candidates.push(m.clone());
        }
    }
    let (prepared, failures) =
        PreparedUniverse::new_lenient(candidates, &first.grid, cfg.engine.h, first.rate);
    for (i, m, e) in &failures {
        log::warn!("candidate {i} ({m}) dropped: {e}");
    }
    if prepared.is_empty() {
        return Err(Error::invalid("no candidate could be priced"));
    }
    let days = data
        .iter()
        .map(MarketDay::new)
        .collect::<Result<Vec<_>>>()?;
    let mut engine = cfg.engine.clone();
    if cfg.calibrate_lambda {
        engine.lambda = calibrate_lambda_days(
            &days,
            &prepared,
            LambdaScope::Universe,
            engine.log_density_floor,
        )?
        .lambda;
    }
    let report = prune(&prepared, &days, &engine, cfg.spec.max_per_family)?;
    Ok(BuiltUniverse {
        snapshots,
        candidates: prepared.len(),
        dropped: failures
            .into_iter()
            .map(|(_, m, e)| (m, e.to_string()))
            .collect(),
        lambda: engine.lambda,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn universe_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.txt");
        let u: Vec<ModelInstance> = ModelFamily::ALL.iter().map(|f| f.typical()).collect();
        write_universe(&path, &u).unwrap();
        assert_eq!(read_universe(&path).unwrap(), u);
        assert_eq!(universe_hash(&u).len(), 64);
    }

    #[test]
    fn bad_lines_report_their_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.txt");
        std::fs::write(
            &path,
            "# header\nblack_scholes,sigma=0.2\nheston,kappa=oops\n",
        )
        .unwrap();
        match read_universe(&path) {
            Err(Error::Data { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn snapshot_days_are_spread_over_the_window() {
        assert_eq!(snapshot_indices(121, 60, 3).unwrap(), vec![60, 90, 120]);
        assert!(snapshot_indices(50, 60, 3).is_err());
    }
}
