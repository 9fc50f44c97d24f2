//! The `build-universe` driver: configuration, construction and outputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::config::FlatConfig;
use super::run::{engine_from, grid_from, lambda_from};
use crate::error::{Error, Result};
use crate::market_data::{load_series, OptionGrid};
use crate::models::{ModelFamily, ModelInstance};
use crate::universe::{
    build_universe, universe_text, BuildConfig, BuiltUniverse, FitConfig, UniverseSpec,
};

#[derive(Debug, Clone, PartialEq)]
pub struct BuildSettings {
    pub data: PathBuf,
    pub grid: OptionGrid,
    /// Universe file written.
    pub out: PathBuf,
    /// Pruning log, snapshot fits and per-family selection summary.
    pub log: PathBuf,
    pub snapshots_out: PathBuf,
    pub selection_out: PathBuf,
    pub build: BuildConfig,
}

impl BuildSettings {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_flat(&FlatConfig::read(path)?)
    }

    pub fn from_flat(cfg: &FlatConfig) -> Result<Self> {
        let data = cfg.path_value("data").ok_or_else(|| Error::Config {
            path: cfg.path().to_path_buf(),
            line: 0,
            message: "missing required key data".into(),
        })?;
        let dir = cfg.base_dir();
        let out = cfg
            .path_value("out")
            .unwrap_or_else(|| dir.join("universe.txt"));
        let log = cfg
            .path_value("log")
            .unwrap_or_else(|| dir.join("prune_log.csv"));
        let snapshots_out = cfg
            .path_value("snapshots_out")
            .unwrap_or_else(|| dir.join("snapshots.csv"));
        let selection_out = cfg
            .path_value("selection_out")
            .unwrap_or_else(|| dir.join("selection.csv"));
        let grid = grid_from(cfg)?;

        let d = BuildConfig::default();
        let fd = FitConfig::default();
        let sd = UniverseSpec::default();
        let mut engine = engine_from(cfg)?;
        let lambda = lambda_from(cfg)?;
        if let Some(x) = lambda {
            engine.lambda = x;
        }
        let mut points_by_family = BTreeMap::new();
        for f in ModelFamily::ALL {
            if let Some(n) = cfg.get::<usize>(&format!("points.{}", f.name()))? {
                points_by_family.insert(f, n);
            }
        }
        let extra = match cfg.raw("extra") {
            None => Vec::new(),
            Some(v) => v
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    ModelInstance::parse_line(s).map_err(|e| cfg.error("extra", e.to_string()))
                })
                .collect::<Result<Vec<_>>>()?,
        };
        let build = BuildConfig {
            families: cfg.list::<ModelFamily>("families")?.unwrap_or(d.families),
            snapshots: cfg.get_or("snapshots", d.snapshots)?,
            fit: FitConfig {
                iterations: cfg.get_or("iterations", fd.iterations)?,
                restarts: cfg.get_or("restarts", fd.restarts)?,
                bins: cfg.get_or("bins", fd.bins)?,
                width_sds: cfg.get_or("width_sds", fd.width_sds)?,
                histogram_weight: cfg.get_or("histogram_weight", fd.histogram_weight)?,
                min_returns: cfg.get_or("window", fd.min_returns)?,
                h: engine.h,
                seed: cfg.get_or("seed", fd.seed)?,
            },
            spec: UniverseSpec {
                points: cfg.get_or("points", sd.points)?,
                points_by_family,
                max_candidates: cfg.get_or("max_candidates", sd.max_candidates)?,
                max_per_family: cfg.get_or("max_per_family", sd.max_per_family)?,
            },
            engine,
            calibrate_lambda: lambda.is_none(),
            extra,
        };
        if build.families.is_empty() {
            return Err(cfg.error("families", "no families listed"));
        }
        build
            .spec
            .validate()
            .map_err(|e| cfg.error("points", e.to_string()))?;
        cfg.finish()?;
        Ok(BuildSettings {
            data,
            grid,
            out,
            log,
            snapshots_out,
            selection_out,
            build,
        })
    }
}

/// Builds the universe and writes the universe file (with the snapshot
/// dates and settings in its header), the pruning log, the snapshot fits
/// and the per-family selection summary.
pub fn run_build(settings: &BuildSettings) -> Result<BuiltUniverse> {
    let data = load_series(&settings.data, &settings.grid)?;
    let built = build_universe(&data, &settings.build)?;
    let b = &settings.build;
    let dates: Vec<String> = built.snapshots.iter().map(|s| s.date.to_string()).collect();
    let mut text = String::new();
    text.push_str(&format!("# snapshot_dates = {}\n", dates.join(",")));
    text.push_str(&format!("# pruning_lambda = {:?}\n", built.lambda));
    text.push_str(&format!("# pruning_beta = {:?}\n", b.engine.beta));
    text.push_str(&format!("# histogram_bins = {}\n", b.fit.bins));
    text.push_str(&format!("# histogram_width_sds = {:?}\n", b.fit.width_sds));
    text.push_str(&format!(
        "# histogram_weight = {:?}\n",
        b.fit.histogram_weight
    ));
    text.push_str(&format!("# candidates = {}\n", built.candidates));
    text.push_str(&universe_text(built.instances()));
    for p in [
        &settings.out,
        &settings.log,
        &settings.snapshots_out,
        &settings.selection_out,
    ] {
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(&settings.out, text)?;
    built.report.write_log(&settings.log)?;

    let mut w = csv::Writer::from_path(&settings.snapshots_out)?;
    w.write_record([
        "date",
        "family",
        "instance",
        "surface_residual",
        "histogram_residual",
        "objective",
        "converged",
    ])?;
    for s in &built.snapshots {
        for f in &s.fits {
            w.write_record([
                s.date.to_string(),
                f.instance.family.name().to_string(),
                f.instance.to_string(),
                format!("{:?}", f.surface_residual),
                format!("{:?}", f.histogram_residual),
                format!("{:?}", f.objective),
                f.converged.to_string(),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(&settings.selection_out)?;
    w.write_record(["family", "candidates", "kept", "distance"])?;
    for (f, s) in &built.report.families {
        w.write_record([
            f.name().to_string(),
            s.candidates.to_string(),
            s.kept.to_string(),
            format!("{:?}", s.distance),
        ])?;
    }
    w.flush()?;
    Ok(built)
}
