use std::collections::BTreeMap;
use std::path::Path;

use modelmix::backtest::{run, RunConfig};
use modelmix::engine::MarketDay;
use modelmix::market_data::{write_series, TRADING_DAY};
use modelmix::models::transition_law;
use modelmix::{
    generate_synthetic, write_universe, EngineConfig, ModelInstance, PreparedUniverse, SynthConfig,
};

fn inst(s: &str) -> ModelInstance {
    ModelInstance::parse_line(s).unwrap()
}

fn csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            headers
                .iter()
                .zip(rec.unwrap().iter())
                .map(|(h, v)| (h.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

/// Writes a toy dataset, a universe and a config into `dir`.
fn toy_setup(dir: &Path, n_days: usize, extra: &str) -> std::path::PathBuf {
    let truth = inst("heston,kappa=2,theta=0.04,sigma_v=0.4,rho=-0.7,v0=0.04");
    let data = generate_synthetic(
        &truth,
        &SynthConfig {
            n_days,
            seed: 2,
            noise: 0.002,
            rate: 0.01,
            ..Default::default()
        },
    )
    .unwrap();
    write_series(&dir.join("data.csv"), &data).unwrap();
    write_universe(
        &dir.join("universe.txt"),
        &[truth, inst("black_scholes,sigma=0.2")],
    )
    .unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!("data = data.csv\nuniverse = universe.txt\n{extra}"),
    )
    .unwrap();
    cfg
}

#[test]
fn toy_run_row_counts_and_family_totals() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_file(&toy_setup(dir.path(), 2, "lambda = 2\n")).unwrap();
    let out = dir.path().join("out");
    run(&cfg, &out).unwrap();
    let rows = csv_rows(&out.join("posterior.csv"));
    assert_eq!(rows.len(), 2 * 2 * 3);
    for mode in ["moves", "options", "combined"] {
        let fam = csv_rows(&out.join(format!("family_{mode}.csv")));
        let mut by_date: BTreeMap<String, f64> = BTreeMap::new();
        for r in &fam {
            *by_date.entry(r["date"].clone()).or_default() += r["weight"].parse::<f64>().unwrap();
        }
        assert_eq!(by_date.len(), 2);
        assert!(
            by_date.values().all(|s| (s - 1.0).abs() < 1e-12),
            "{by_date:?}"
        );
    }
}

#[test]
fn rerun_writes_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_file(&toy_setup(
        dir.path(),
        30,
        "lambda = auto\ntraining_days = 10\n",
    ))
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&cfg, &a).unwrap();
    run(&cfg, &b).unwrap();
    for f in &first.files {
        let name = f.file_name().unwrap();
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn combined_run_is_the_sum_of_the_single_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_file(&toy_setup(dir.path(), 12, "lambda = 3\nbeta = 1\n")).unwrap();
    let out = dir.path().join("out");
    run(&cfg, &out).unwrap();
    let ell = |mode: &str| -> Vec<f64> {
        csv_rows(&out.join(format!("posterior_{mode}.csv")))
            .iter()
            .map(|r| r["ell"].parse().unwrap())
            .collect()
    };
    let (c, m, o) = (ell("combined"), ell("moves"), ell("options"));
    for i in 0..c.len() {
        assert!((c[i] - m[i] - o[i]).abs() <= 1e-9 * c[i].abs().max(1.0));
    }
}

#[test]
fn noise_free_data_is_fitted_exactly_by_its_generator() {
    let truth = inst("kou,sigma=0.15,lambda_j=1,p_up=0.3,eta=10");
    let cfg = SynthConfig {
        n_days: 20,
        rate: 0.02,
        ..Default::default()
    };
    let data = generate_synthetic(&truth, &cfg).unwrap();
    let u = PreparedUniverse::new(vec![truth], &cfg.grid, TRADING_DAY, 0.02).unwrap();
    let engine = EngineConfig::default();
    let days: Vec<MarketDay> = data.iter().map(|o| MarketDay::new(o).unwrap()).collect();
    for w in days.windows(2) {
        let q = u.increments(&w[0], &w[1], &engine).unwrap()[0].penalty;
        assert!(q.abs() < 1e-12, "{q}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let truth = inst("nig,alpha=8,beta=-3,delta=0.3");
    let cfg = SynthConfig {
        n_days: 40,
        seed: 99,
        noise: 0.003,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_series(&a, &generate_synthetic(&truth, &cfg).unwrap()).unwrap();
    write_series(&b, &generate_synthetic(&truth, &cfg).unwrap()).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn long_run_mean_return_matches_the_drift() {
    let truth = inst("merton,sigma=0.15,lambda_j=2,mu_j=-0.05,sigma_j=0.08");
    let rate = 0.03;
    let n = 100_001;
    let grid = modelmix::OptionGrid::new(vec![0.25], vec![1.0]).unwrap();
    let data = generate_synthetic(
        &truth,
        &SynthConfig {
            n_days: n,
            seed: 17,
            rate,
            grid,
            ..Default::default()
        },
    )
    .unwrap();
    let returns: Vec<f64> = data
        .windows(2)
        .map(|w| w[1].log_price - w[0].log_price)
        .collect();
    let m = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / m;
    let sd = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    let law = transition_law(&truth, TRADING_DAY).unwrap();
    let drift = law.mean() + rate * TRADING_DAY;
    assert!(
        (mean - drift).abs() < 3.0 * sd / m.sqrt(),
        "{mean} vs {drift} (se {})",
        sd / m.sqrt()
    );
}
