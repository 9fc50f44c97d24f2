//! Acceptance checks, one line per criterion.
//!
//! Failures are reported but do not fail the target unless
//! `MODELMIX_ACCEPTANCE_STRICT` is set, so that a negative result is recorded
//! rather than hidden behind a red build.

use std::time::Instant;

use modelmix::backtest::{run, RunConfig};
use modelmix::engine::{run_series, MarketDay};
use modelmix::market_data::{black_call, write_series, TRADING_DAY};
use modelmix::models::{cf_price_surface, transition_law};
use modelmix::special::norm_pdf;
use modelmix::universe::FitConfig;
use modelmix::{
    build_universe, calibrate_lambda, density_from_cf, generate_synthetic, penalty_structured,
    price_surface, write_universe, BuildConfig, EngineConfig, LambdaScope, LikelihoodMode,
    ModelFamily, ModelInstance, NormalizedSurface, OptionGrid, PenaltyConfig, PreparedUniverse,
    SurfaceObservation, SynthConfig, TransitionLaw, UniverseSpec,
};
use rand::{Rng, SeedableRng};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn inst(s: &str) -> ModelInstance {
    ModelInstance::parse_line(s).expect("valid instance line")
}

fn worst_rel(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs() / y.abs())
        .fold(0.0, f64::max)
}

fn pricing_oracle() -> Outcome {
    let start = Instant::now();
    let grid = OptionGrid::default();
    let bs = inst("black_scholes,sigma=0.2");
    let cf = cf_price_surface(&bs, 100.0, &grid).unwrap();
    let exact: Vec<Vec<f64>> = grid
        .expiries()
        .iter()
        .map(|&tau| {
            grid.moneyness()
                .iter()
                .map(|&k| 100.0 * black_call(k, 0.2 * tau.sqrt()))
                .collect()
        })
        .collect();
    let cf_err = worst_rel(&cf, &exact);

    let price = |s: &str| price_surface(&inst(s), 100.0, 0.02, &grid).unwrap();
    let closed = price("black_scholes,sigma=0.2");
    let heston = price("heston,kappa=2,theta=0.04,sigma_v=0.3,rho=-0.7,v0=0.05");
    let limits = [
        (
            "merton",
            worst_rel(
                &price("merton,sigma=0.2,lambda_j=0,mu_j=-0.1,sigma_j=0.1"),
                &closed,
            ),
        ),
        (
            "kou",
            worst_rel(&price("kou,sigma=0.2,lambda_j=0,p_up=0.3,eta=10"), &closed),
        ),
        ("cev", worst_rel(&price("cev,sigma=0.2,beta=1"), &closed)),
        (
            "bates",
            worst_rel(
                &price(
                    "bates,kappa=2,theta=0.04,sigma_v=0.3,rho=-0.7,v0=0.05,lambda_j=0,mu_j=-0.08",
                ),
                &heston,
            ),
        ),
    ];
    let secs = start.elapsed().as_secs_f64();
    let worst_limit = limits.iter().map(|l| l.1).fold(0.0, f64::max);
    let pass = cf_err < 1e-6 && worst_limit < 1e-5 && secs < 5.0;
    let detail = limits
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(
        pass,
        format!("cf route {cf_err:.1e}; limits {detail}; {secs:.2}s"),
    )
}

fn mass(law: &TransitionLaw) -> f64 {
    if let TransitionLaw::Table(t) = law {
        return t.total_mass();
    }
    let (lo, hi) = law.support();
    let n = 200_000;
    let dx = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * law.density(lo + i as f64 * dx)
        })
        .sum::<f64>()
        * dx
}

fn density_normalization() -> Outcome {
    let mut worst = (0.0, ModelFamily::BlackScholes);
    for f in ModelFamily::ALL {
        let err = (mass(&transition_law(&f.typical(), TRADING_DAY).unwrap()) - 1.0).abs();
        if err >= worst.0 {
            worst = (err, f);
        }
    }
    let t = density_from_cf(&inst("black_scholes,sigma=0.2"), TRADING_DAY).unwrap();
    let sd = 0.2 * TRADING_DAY.sqrt();
    let sup = (0..t.len())
        .map(|j| (t.values()[j] - norm_pdf((t.x(j) + 0.5 * sd * sd) / sd) / sd).abs())
        .fold(0.0, f64::max);
    outcome(
        worst.0 < 1e-4 && sup < 1e-6,
        format!(
            "worst mass error {:.1e} ({}); gaussian sup error {sup:.1e}",
            worst.0, worst.1
        ),
    )
}

/// Normalised calls of a random discrete law with unit mean.
fn random_row(rng: &mut impl Rng, ks: &[f64]) -> Vec<f64> {
    let n = rng.random_range(1..6);
    let atoms: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..3.0), rng.random_range(0.01..1.0)))
        .collect();
    let wsum: f64 = atoms.iter().map(|a| a.1).sum();
    let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum::<f64>() / wsum;
    ks.iter()
        .map(|&k| {
            atoms
                .iter()
                .map(|&(x, w)| w / wsum * (x / mean - k).max(0.0))
                .sum()
        })
        .collect()
}

fn random_surface(rng: &mut impl Rng, grid: &OptionGrid) -> NormalizedSurface {
    let rows = grid
        .expiries()
        .iter()
        .map(|_| random_row(rng, grid.moneyness()))
        .collect();
    NormalizedSurface::from_model(grid.clone(), rows)
}

/// Adds strike `k_new` to the surface, interpolating linearly.
fn refine(s: &NormalizedSurface, k_new: f64) -> NormalizedSurface {
    let grid = s.grid();
    let mut ks = grid.moneyness().to_vec();
    let pos = ks.iter().position(|&k| k > k_new).expect("inside the grid");
    ks.insert(pos, k_new);
    let full_k = s.k();
    let rows = s
        .rows()
        .iter()
        .map(|z| {
            let t = (k_new - full_k[pos]) / (full_k[pos + 1] - full_k[pos]);
            let mut r = z[1..].to_vec();
            r.insert(pos, z[pos] + t * (z[pos + 1] - z[pos]));
            r
        })
        .collect();
    NormalizedSurface::from_model(OptionGrid::new(grid.expiries().to_vec(), ks).unwrap(), rows)
}

fn penalty_bound() -> Outcome {
    let grid = OptionGrid::default();
    let t = grid.max_expiry();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let (mut bound, mut zero, mut refined) = (0usize, 0usize, 0usize);
    let mut worst_refine = 0.0f64;
    for _ in 0..10_000 {
        let lambda = 10f64.powf(rng.random_range(-3.0..3.0));
        let (a, b) = (
            random_surface(&mut rng, &grid),
            random_surface(&mut rng, &grid),
        );
        let q = penalty_structured(&a, &b, &PenaltyConfig::structured(lambda)).unwrap();
        if !(0.0..=2.0 * lambda * t).contains(&q) {
            bound += 1;
        }
        if penalty_structured(&a, &a, &PenaltyConfig::structured(lambda)).unwrap() != 0.0 {
            zero += 1;
        }
        let k_new = loop {
            let k: f64 = rng.random_range(0.801..1.199);
            if grid.moneyness().iter().all(|g| (g - k).abs() > 1e-3) {
                break k;
            }
        };
        let q1 = penalty_structured(&a, &b, &PenaltyConfig::structured(1.0)).unwrap();
        let r = penalty_structured(
            &refine(&a, k_new),
            &refine(&b, k_new),
            &PenaltyConfig::structured(1.0),
        )
        .unwrap();
        worst_refine = worst_refine.max((q1 - r).abs());
        if (q1 - r).abs() > 1e-12 {
            refined += 1;
        }
    }
    outcome(
        bound == 0 && zero == 0 && refined == 0,
        format!(
            "bound violations {bound}, Q(c,c) != 0 {zero}, refinement worst {worst_refine:.1e}"
        ),
    )
}

fn days_of(obs: &[SurfaceObservation]) -> Vec<MarketDay> {
    obs.iter().map(|o| MarketDay::new(o).unwrap()).collect()
}

fn bayes_correctness() -> Outcome {
    let sigmas = [0.15, 0.2, 0.25];
    let rate = 0.02;
    let h = TRADING_DAY;
    let instances: Vec<ModelInstance> = sigmas
        .iter()
        .map(|s| inst(&format!("black_scholes,sigma={s}")))
        .collect();
    let cfg = SynthConfig {
        n_days: 11,
        seed: 5,
        rate,
        ..Default::default()
    };
    let days = days_of(&generate_synthetic(&instances[1], &cfg).unwrap());
    let u = PreparedUniverse::new(instances, &cfg.grid, h, rate).unwrap();
    let engine = EngineConfig {
        beta: 1.0,
        mode: LikelihoodMode::MovesOnly,
        ..Default::default()
    };
    let post = run_series(&days, &u, &engine, |_, _| Ok(()))
        .unwrap()
        .posterior(&u);
    let logs: Vec<f64> = sigmas
        .iter()
        .map(|s| {
            let var = s * s * h;
            days.windows(2)
                .map(|w| {
                    let y = w[1].log_price - w[0].log_price - (rate - 0.5 * s * s) * h;
                    -0.5 * (2.0 * std::f64::consts::PI * var).ln() - y * y / (2.0 * var)
                })
                .sum()
        })
        .collect();
    let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logs.iter().map(|l| (l - peak).exp()).sum();
    let err = post
        .weights
        .iter()
        .zip(&logs)
        .map(|(w, l)| (w - (l - peak).exp() / z).abs())
        .fold(0.0, f64::max);
    outcome(
        err < 1e-10,
        format!("10 steps, worst weight error {err:.1e}"),
    )
}

/// The Heston concentration experiment shared by criteria 5, 6 and 8.
struct Concentration {
    /// Family weights per date, Combined mode.
    heston: Vec<f64>,
    best_other: Vec<(f64, ModelFamily)>,
    black_scholes_final: f64,
    universe_size: usize,
    lambda: f64,
    ratio: f64,
    secs: f64,
}

const TRAINING_DAYS: usize = 250;

fn concentration() -> Concentration {
    let start = Instant::now();
    let truth = inst("heston,kappa=2,theta=0.04,sigma_v=0.4,rho=-0.7,v0=0.04");
    let rate = 0.01;
    let synth = SynthConfig {
        n_days: 500,
        seed: 11,
        noise: 0.002,
        rate,
        ..Default::default()
    };
    let data = generate_synthetic(&truth, &synth).unwrap();
    let build = BuildConfig {
        snapshots: 2,
        fit: FitConfig {
            iterations: 200,
            restarts: 1,
            ..Default::default()
        },
        spec: UniverseSpec {
            points: 4,
            max_candidates: 5_000,
            ..Default::default()
        },
        extra: vec![truth.clone()],
        ..Default::default()
    };
    let built = build_universe(&data, &build).unwrap();
    let mut instances = built.instances().to_vec();
    if !instances.contains(&truth) {
        instances.push(truth.clone());
    }
    let u = PreparedUniverse::new(instances, &synth.grid, TRADING_DAY, rate).unwrap();
    let j = u.instances().position(|m| *m == truth).unwrap();

    let cal = calibrate_lambda(
        &data[..TRAINING_DAYS],
        &u,
        LambdaScope::Universe,
        EngineConfig::default().log_density_floor,
    )
    .unwrap();
    let engine = EngineConfig {
        lambda: cal.lambda,
        mode: LikelihoodMode::Combined,
        ..Default::default()
    };
    let days = days_of(&data);

    // contributions of the generating instance over the training window
    let (mut moves, mut options) = (0.0, 0.0);
    for w in days[..TRAINING_DAYS].windows(2) {
        let inc = u.increments(&w[0], &w[1], &engine).unwrap();
        moves += inc[j].log_density.abs();
        options += inc[j].penalty;
    }

    let mut heston = Vec::new();
    let mut best_other = Vec::new();
    let mut black_scholes_final = 0.0;
    run_series(&days, &u, &engine, |_, state| {
        let post = state.posterior(&u);
        let get = |f: ModelFamily| post.by_family.get(&f).copied().unwrap_or(0.0);
        heston.push(get(ModelFamily::Heston));
        let other = ModelFamily::ALL
            .iter()
            .filter(|&&f| f != ModelFamily::Heston)
            .map(|&f| (get(f), f))
            .fold((f64::NEG_INFINITY, ModelFamily::BlackScholes), |a, b| {
                if b.0 > a.0 {
                    b
                } else {
                    a
                }
            });
        best_other.push(other);
        black_scholes_final = get(ModelFamily::BlackScholes);
        Ok(())
    })
    .unwrap();
    Concentration {
        heston,
        best_other,
        black_scholes_final,
        universe_size: u.len(),
        lambda: cal.lambda,
        ratio: moves / options,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn posterior_concentration(c: &Concentration) -> Outcome {
    let losing: Vec<usize> = (TRAINING_DAYS..c.heston.len())
        .filter(|&t| c.heston[t] <= c.best_other[t].0)
        .collect();
    let last = c.heston.len() - 1;
    let detail = format!(
        "{} instances, heston {:.3} vs {} {:.3} at the final date, {} dates behind from day {TRAINING_DAYS}{}; {:.0}s",
        c.universe_size,
        c.heston[last],
        c.best_other[last].1,
        c.best_other[last].0,
        losing.len(),
        losing.first().map(|t| format!(" (first {t})")).unwrap_or_default(),
        c.secs,
    );
    outcome(losing.is_empty(), detail)
}

fn mode_sanity(c: &Concentration) -> Outcome {
    let h = *c.heston.last().unwrap();
    outcome(
        c.black_scholes_final < h,
        format!(
            "black_scholes {:.3e} vs heston {h:.3}",
            c.black_scholes_final
        ),
    )
}

fn lambda_calibration(c: &Concentration) -> Outcome {
    outcome(
        (0.5..=2.0).contains(&c.ratio),
        format!(
            "lambda {:.3e}; generating instance |log p| / Q = {:.3}",
            c.lambda, c.ratio
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let truth =
        inst("bates,kappa=2,theta=0.04,sigma_v=0.4,rho=-0.7,v0=0.04,lambda_j=0.5,mu_j=-0.08");
    let synth = SynthConfig {
        n_days: 40,
        seed: 3,
        noise: 0.002,
        ..Default::default()
    };
    write_series(
        &dir.path().join("data.csv"),
        &generate_synthetic(&truth, &synth).unwrap(),
    )
    .unwrap();
    let mut universe: Vec<ModelInstance> = ModelFamily::ALL.iter().map(|f| f.typical()).collect();
    universe.push(truth);
    write_universe(&dir.path().join("universe.txt"), &universe).unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(
        &path,
        "data = data.csv\nuniverse = universe.txt\nlambda = auto\ntraining_days = 20\n",
    )
    .unwrap();
    let cfg = RunConfig::from_file(&path).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&cfg, &a).unwrap();
    run(&cfg, &b).unwrap();
    let differing: Vec<String> = first
        .files
        .iter()
        .filter_map(|f| {
            let name = f.file_name().unwrap();
            let same = std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap();
            (!same).then(|| name.to_string_lossy().into_owned())
        })
        .collect();
    outcome(
        differing.is_empty(),
        format!(
            "{} files compared, differing: {differing:?}",
            first.files.len()
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("pricing oracle", pricing_oracle()),
        ("density normalization", density_normalization()),
        ("penalty bound", penalty_bound()),
        ("bayes correctness", bayes_correctness()),
    ];
    let c = concentration();
    results.push(("posterior concentration", posterior_concentration(&c)));
    results.push(("mode sanity", mode_sanity(&c)));
    results.push(("determinism", determinism()));
    results.push(("lambda calibration", lambda_calibration(&c)));

    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!(
            "criterion {} {name}: {} ({})",
            i + 1,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 && std::env::var_os("MODELMIX_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
