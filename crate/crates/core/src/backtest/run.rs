//! End-to-end runs: load data and universe, run the recursion in each
//! likelihood mode, and write posterior series, family totals, product
//! reports and a manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::config::FlatConfig;
use crate::engine::{
    run_series, EngineConfig, FamilyPrior, LikelihoodMode, MarketDay, Posterior, PreparedUniverse,
};
use crate::error::{Error, Result};
use crate::market_data::{load_series, OptionGrid, SurfaceObservation};
use crate::models::{ModelFamily, ModelInstance};
use crate::penalty::{calibrate_lambda, LambdaCalibration, LambdaScope, PenaltyMode};
use crate::products::{mixture_delta, mixture_price, predictive_density};
use crate::universe::{read_universe, universe_hash};

/// How λ is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum LambdaSetting {
    Fixed(f64),
    /// Calibrated on the first `training_days` observations.
    Calibrated {
        scope: LambdaScope,
        training_days: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub universe: PathBuf,
    pub grid: OptionGrid,
    /// Everything but λ and the mode, which vary per run.
    pub engine: EngineConfig,
    pub lambda: LambdaSetting,
    pub modes: Vec<LikelihoodMode>,
    /// Grid cell reported in the product files.
    pub product_expiry: f64,
    pub product_moneyness: f64,
    pub gnuplot: bool,
    /// Settings as written, echoed into the manifest.
    pub echo: Vec<(String, String)>,
}

/// Grid from optional `expiries` and `moneyness` lists.
pub(crate) fn grid_from(cfg: &FlatConfig) -> Result<OptionGrid> {
    let d = OptionGrid::default();
    let expiries = cfg
        .list::<f64>("expiries")?
        .unwrap_or_else(|| d.expiries().to_vec());
    let moneyness = cfg
        .list::<f64>("moneyness")?
        .unwrap_or_else(|| d.moneyness().to_vec());
    OptionGrid::new(expiries, moneyness).map_err(|e| cfg.error("expiries", e.to_string()))
}

/// Engine settings shared by run and universe-building configurations.
pub(crate) fn engine_from(cfg: &FlatConfig) -> Result<EngineConfig> {
    let d = EngineConfig::default();
    let e = EngineConfig {
        beta: cfg.get_or("beta", d.beta)?,
        h: cfg.get_or("h", d.h)?,
        lambda: d.lambda,
        mode: d.mode,
        penalty: cfg.get_or::<PenaltyMode>("penalty", d.penalty)?,
        naive_weight: cfg.get_or("naive_weight", d.naive_weight)?,
        log_density_floor: cfg.get_or("log_density_floor", d.log_density_floor)?,
        family_prior: cfg.get_or::<FamilyPrior>("prior", d.family_prior)?,
    };
    e.validate().map_err(|err| Error::Config {
        path: cfg.path().to_path_buf(),
        line: 0,
        message: err.to_string(),
    })?;
    Ok(e)
}

/// `auto` or a positive number.
pub(crate) fn lambda_from(cfg: &FlatConfig) -> Result<Option<f64>> {
    match cfg.raw("lambda") {
        None | Some("auto") => Ok(None),
        Some(v) => {
            let x: f64 = v
                .parse()
                .map_err(|_| cfg.error("lambda", format!("{v:?} is neither auto nor a number")))?;
            if !(x > 0.0 && x.is_finite()) {
                return Err(cfg.error("lambda", "must be positive"));
            }
            Ok(Some(x))
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_flat(&FlatConfig::read(path)?)
    }

    pub fn from_flat(cfg: &FlatConfig) -> Result<Self> {
        let missing = |key: &str| Error::Config {
            path: cfg.path().to_path_buf(),
            line: 0,
            message: format!("missing required key {key}"),
        };
        let data = cfg.path_value("data").ok_or_else(|| missing("data"))?;
        let universe = cfg
            .path_value("universe")
            .ok_or_else(|| missing("universe"))?;
        let grid = grid_from(cfg)?;
        let engine = engine_from(cfg)?;
        let lambda = match lambda_from(cfg)? {
            Some(x) => LambdaSetting::Fixed(x),
            None => LambdaSetting::Calibrated {
                scope: cfg.get_or::<LambdaScope>("lambda_scope", LambdaScope::Universe)?,
                training_days: cfg.get_or("training_days", 250usize)?,
            },
        };
        if let LambdaSetting::Calibrated { training_days, .. } = lambda {
            if training_days < 2 {
                return Err(cfg.error("training_days", "need at least two days"));
            }
        }
        let modes = cfg
            .list::<LikelihoodMode>("modes")?
            .unwrap_or_else(|| LikelihoodMode::ALL.to_vec());
        if modes.is_empty() {
            return Err(cfg.error("modes", "no modes listed"));
        }
        let product_expiry = cfg.get_or("product_expiry", grid.expiries()[0])?;
        let nearest_atm = grid
            .moneyness()
            .iter()
            .copied()
            .min_by(|a, b| (a - 1.0).abs().total_cmp(&(b - 1.0).abs()))
            .expect("non-empty grid");
        let product_moneyness = cfg.get_or("product_moneyness", nearest_atm)?;
        if grid.locate(product_expiry, product_moneyness).is_none() {
            return Err(cfg.error(
                "product_expiry",
                format!("({product_expiry}, {product_moneyness}) is not a grid cell"),
            ));
        }
        let gnuplot = cfg.get_or("gnuplot", false)?;
        cfg.finish()?;
        Ok(RunConfig {
            data,
            universe,
            grid,
            engine,
            lambda,
            modes,
            product_expiry,
            product_moneyness,
            gnuplot,
            echo: cfg
                .entries()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        })
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub lambda: f64,
    pub calibration: Option<LambdaCalibration>,
    /// Posterior at the last date, per mode.
    pub final_posteriors: Vec<(LikelihoodMode, Posterior)>,
    pub files: Vec<PathBuf>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").expect("writing to a string");
        s
    })
}

/// `# key = value` lines at the head of a universe file.
fn universe_header(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .map_while(|l| l.trim().strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect())
}

struct Writer {
    inner: csv::Writer<std::fs::File>,
}

impl Writer {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut inner = csv::Writer::from_path(path)?;
        inner.write_record(header)?;
        Ok(Writer { inner })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        self.inner.write_record(fields)?;
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn gnuplot_script(mode: LikelihoodMode, families: &[ModelFamily]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set xdata time");
    let _ = writeln!(s, "set timefmt '%Y-%m-%d'");
    let _ = writeln!(s, "set yrange [0:1]");
    let _ = writeln!(s, "set key outside");
    let _ = writeln!(s, "set title 'posterior by family ({})'", mode.name());
    let plots: Vec<String> = families
        .iter()
        .map(|f| {
            format!(
                "'family_{m}.csv' using 1:(stringcolumn(2) eq '{f}' ? $3 : 1/0) with lines title '{f}'",
                m = mode.name(),
                f = f.name()
            )
        })
        .collect();
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

/// Runs every configured mode and writes the outputs into `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out)?;
    let data = load_series(&cfg.data, &cfg.grid)?;
    if data.is_empty() {
        return Err(Error::Data {
            path: cfg.data.clone(),
            line: 0,
            message: "no complete observation dates".into(),
        });
    }
    let instances = read_universe(&cfg.universe)?;
    let universe = PreparedUniverse::new(instances.clone(), &cfg.grid, cfg.engine.h, data[0].rate)?;
    let days = data
        .iter()
        .map(MarketDay::new)
        .collect::<Result<Vec<_>>>()?;

    let (lambda, calibration) = match &cfg.lambda {
        LambdaSetting::Fixed(x) => (*x, None),
        LambdaSetting::Calibrated {
            scope,
            training_days,
        } => {
            let n = (*training_days).min(data.len());
            let c = calibrate_lambda(&data[..n], &universe, *scope, cfg.engine.log_density_floor)?;
            log::info!("lambda {} from {n} training days", c.lambda);
            (c.lambda, Some(c))
        }
    };

    let (ei, mi) = cfg
        .grid
        .locate(cfg.product_expiry, cfg.product_moneyness)
        .expect("checked when the config was read");
    let cell = ei * cfg.grid.moneyness().len() + mi;
    let families = universe.families();
    let mut family_list = families.clone();
    family_list.sort();
    family_list.dedup();

    let mut files = Vec::new();
    let mut finals = Vec::new();
    let all_path = out.join("posterior.csv");
    let mut all = Writer::create(
        &all_path,
        &["date", "mode", "instance_id", "family", "ell", "weight"],
    )?;
    for &mode in &cfg.modes {
        let engine = EngineConfig {
            lambda,
            mode,
            ..cfg.engine.clone()
        };
        let post_path = out.join(format!("posterior_{}.csv", mode.name()));
        let fam_path = out.join(format!("family_{}.csv", mode.name()));
        let prod_path = out.join(format!("products_{}.csv", mode.name()));
        let mut post_w = Writer::create(
            &post_path,
            &["date", "instance_id", "family", "ell", "weight"],
        )?;
        let mut fam_w = Writer::create(&fam_path, &["date", "family", "weight"])?;
        let mut prod_w = Writer::create(
            &prod_path,
            &[
                "date",
                "expiry",
                "moneyness",
                "mixture_price",
                "price_sd",
                "price_q05",
                "price_q50",
                "price_q95",
                "price_min",
                "price_max",
                "mixture_delta",
                "predictive_mean",
                "predictive_sd",
            ],
        )?;
        let mut last = None;
        run_series(&days, &universe, &engine, |t, state| {
            let post = state.posterior(&universe);
            let obs: &SurfaceObservation = &data[t];
            let date = obs.date.to_string();
            for (i, (ell, w)) in state.ell.iter().zip(&post.weights).enumerate() {
                let fam = families[i].name().to_string();
                all.row(&[
                    date.clone(),
                    mode.name().to_string(),
                    i.to_string(),
                    fam.clone(),
                    num(*ell),
                    num(*w),
                ])?;
                post_w.row(&[date.clone(), i.to_string(), fam, num(*ell), num(*w)])?;
            }
            for f in &family_list {
                fam_w.row(&[
                    date.clone(),
                    f.name().to_string(),
                    num(post.family_weight(*f)),
                ])?;
            }
            let mut prices = Vec::with_capacity(universe.len());
            let mut deltas = Vec::with_capacity(universe.len());
            for i in 0..universe.len() {
                prices.push(obs.spot * universe.surface(i, obs.rate)?.quoted[cell]);
                deltas.push(universe.deltas(i, obs.rate)?[cell]);
            }
            let dist = mixture_price(&post, &prices)?;
            let (lo, hi) = dist.range();
            let pred = predictive_density(&post, &universe, obs.log_price, obs.rate)?;
            prod_w.row(&[
                date,
                num(cfg.product_expiry),
                num(cfg.product_moneyness),
                num(dist.mean()),
                num(dist.variance().max(0.0).sqrt()),
                num(dist.quantile(0.05)),
                num(dist.quantile(0.5)),
                num(dist.quantile(0.95)),
                num(lo),
                num(hi),
                num(mixture_delta(&post, &deltas)?),
                num(pred.mean()),
                num(pred.variance().max(0.0).sqrt()),
            ])?;
            last = Some(post);
            Ok(())
        })?;
        post_w.finish()?;
        fam_w.finish()?;
        prod_w.finish()?;
        files.extend([post_path, fam_path, prod_path]);
        if cfg.gnuplot {
            let gp = out.join(format!("plot_{}.gp", mode.name()));
            std::fs::write(&gp, gnuplot_script(mode, &family_list))?;
            files.push(gp);
        }
        finals.push((mode, last.expect("at least one date")));
    }
    all.finish()?;
    files.insert(0, all_path);

    let manifest_path = out.join("manifest.txt");
    std::fs::write(
        &manifest_path,
        manifest(cfg, &data, &instances, lambda, calibration.as_ref())?,
    )?;
    files.push(manifest_path);
    Ok(RunSummary {
        lambda,
        calibration,
        final_posteriors: finals,
        files,
    })
}

fn manifest(
    cfg: &RunConfig,
    data: &[SurfaceObservation],
    instances: &[ModelInstance],
    lambda: f64,
    calibration: Option<&LambdaCalibration>,
) -> Result<String> {
    let join = |v: &[f64]| v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(",");
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} = {v}");
    };
    kv(
        "software",
        format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
    );
    for (k, v) in &cfg.echo {
        kv(&format!("config.{k}"), v.clone());
    }
    kv("beta", num(cfg.engine.beta));
    kv("h", num(cfg.engine.h));
    kv("lambda", num(lambda));
    match (&cfg.lambda, calibration) {
        (
            LambdaSetting::Calibrated {
                scope,
                training_days,
            },
            Some(c),
        ) => {
            kv("lambda_source", "calibrated".into());
            kv("lambda_scope", scope.name());
            kv("lambda_training_days", training_days.to_string());
            kv("lambda_mean_abs_log_density", num(c.mean_abs_log_density));
            kv("lambda_mean_penalty", num(c.mean_penalty));
        }
        _ => kv("lambda_source", "fixed".into()),
    }
    kv(
        "modes",
        cfg.modes
            .iter()
            .map(|m| m.name())
            .collect::<Vec<_>>()
            .join(","),
    );
    kv("penalty", cfg.engine.penalty.name().into());
    kv("naive_weight", num(cfg.engine.naive_weight));
    kv("log_density_floor", num(cfg.engine.log_density_floor));
    kv("prior", cfg.engine.family_prior.name().into());
    kv("grid_expiries", join(cfg.grid.expiries()));
    kv("grid_moneyness", join(cfg.grid.moneyness()));
    kv("universe_size", instances.len().to_string());
    kv("universe_hash", universe_hash(instances));
    for (k, v) in universe_header(&cfg.universe)? {
        kv(&format!("universe.{k}"), v);
    }
    kv(
        "data_sha256",
        hex(&Sha256::digest(std::fs::read(&cfg.data)?)),
    );
    kv("data_days", data.len().to_string());
    kv("data_first", data[0].date.to_string());
    kv("data_last", data[data.len() - 1].date.to_string());
    Ok(s)
}
