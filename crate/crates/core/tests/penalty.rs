use modelmix::engine::MarketDay;
use modelmix::market_data::{OptionGrid, TRADING_DAY};
use modelmix::penalty::{
    calibrate_lambda, penalty_naive, penalty_structured, strike_slopes, LambdaScope, PenaltyConfig,
};
use modelmix::{
    generate_synthetic, models::normalized_surface, EngineConfig, ModelFamily, ModelInstance,
    NormalizedSurface, PreparedUniverse, SynthConfig,
};
use proptest::prelude::*;

/// Normalised calls `E[(X - k)^+]` of a discrete law with unit mean: a
/// valid surface row by construction.
fn row_from_atoms(atoms: &[(f64, f64)], ks: &[f64]) -> Vec<f64> {
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

fn atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0f64..3.0, 0.01f64..1.0), 1..6)
}

fn surface_on(grid: &OptionGrid) -> impl Strategy<Value = NormalizedSurface> {
    let g = grid.clone();
    prop::collection::vec(atoms(), grid.expiries().len()).prop_map(move |rows| {
        let rows = rows
            .iter()
            .map(|a| row_from_atoms(a, g.moneyness()))
            .collect();
        NormalizedSurface::from_model(g.clone(), rows)
    })
}

fn cfg(lambda: f64) -> PenaltyConfig {
    PenaltyConfig::structured(lambda)
}

/// Inserts strike `k_new` into both grids, linearly interpolating values.
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
            // z includes the k_0 column; the new strike sits between full_k[pos] and full_k[pos + 1]
            let (k0, k1) = (full_k[pos], full_k[pos + 1]);
            let t = (k_new - k0) / (k1 - k0);
            let mut r = z[1..].to_vec();
            r.insert(pos, z[pos] + t * (z[pos + 1] - z[pos]));
            r
        })
        .collect();
    NormalizedSurface::from_model(OptionGrid::new(grid.expiries().to_vec(), ks).unwrap(), rows)
}

#[test]
fn constant_and_single_step_slopes() {
    let grid = OptionGrid::new(vec![1.0], vec![0.5, 1.0, 2.0]).unwrap();
    let flat = NormalizedSurface::from_model(grid.clone(), vec![vec![1.0, 1.0, 1.0]]);
    assert!(strike_slopes(&flat)[0].iter().all(|s| *s == 0.0));
    let grid = OptionGrid::new(vec![1.0], vec![1.0, 2.0]).unwrap();
    let tail = NormalizedSurface::from_model(grid, vec![vec![0.0, 0.0]]);
    assert_eq!(strike_slopes(&tail)[0], vec![-1.0, 0.0]);
}

#[test]
fn black_scholes_tail_is_non_increasing() {
    let grid = OptionGrid::default();
    let s = normalized_surface(
        &ModelInstance::parse_line("black_scholes,sigma=0.2").unwrap(),
        &grid,
        0.0,
    )
    .unwrap();
    for slopes in strike_slopes(&s) {
        let tail: Vec<f64> = slopes.iter().map(|c| -c).collect();
        assert!(tail.windows(2).all(|w| w[1] <= w[0]), "{tail:?}");
        assert!(tail.iter().all(|t| (0.0..=1.0).contains(t)));
    }
}

/// Midpoint rule over `[0, τ_M] x [0, k_N]` of the squared slope gap, with
/// the first expiry's value held on `[0, τ_1]` and linear interpolation of
/// the squared gap between expiries.
fn brute_force(a: &NormalizedSurface, b: &NormalizedSurface, nt: usize, nk: usize) -> f64 {
    let (sa, sb) = (strike_slopes(a), strike_slopes(b));
    let taus = a.grid().expiries();
    let ks = a.k();
    let gap = |m: usize, x: f64| {
        let j = (1..ks.len()).find(|&j| x < ks[j]).expect("inside");
        (sa[m][j - 1] - sb[m][j - 1]).powi(2)
    };
    let t_max = *taus.last().unwrap();
    let k_max = *ks.last().unwrap();
    let (dt, dk) = (t_max / nt as f64, k_max / nk as f64);
    let mut total = 0.0;
    for it in 0..nt {
        let t = (it as f64 + 0.5) * dt;
        for ik in 0..nk {
            let x = (ik as f64 + 0.5) * dk;
            let v = match taus.iter().position(|&s| t <= s) {
                Some(0) => gap(0, x),
                Some(m) => {
                    let w = (t - taus[m - 1]) / (taus[m] - taus[m - 1]);
                    (1.0 - w) * gap(m - 1, x) + w * gap(m, x)
                }
                None => unreachable!(),
            };
            total += v;
        }
    }
    total * dt * dk
}

#[test]
fn toy_surfaces_match_brute_force_quadrature() {
    let grid = OptionGrid::new(vec![0.5, 1.5], vec![1.0]).unwrap();
    let a = NormalizedSurface::from_model(grid.clone(), vec![vec![0.3], vec![0.5]]);
    let b = NormalizedSurface::from_model(grid, vec![vec![0.1], vec![0.2]]);
    let q = penalty_structured(&a, &b, &cfg(1.0)).unwrap();
    let oracle = brute_force(&a, &b, 400, 250);
    assert!((q - oracle).abs() < 1e-6, "{q} vs {oracle}");

    let grid = OptionGrid::new(vec![0.25, 1.0, 2.0], vec![0.5, 1.0, 1.25]).unwrap();
    let a = NormalizedSurface::from_model(
        grid.clone(),
        vec![
            row_from_atoms(&[(0.6, 1.0), (1.3, 1.0)], grid.moneyness()),
            row_from_atoms(&[(0.2, 1.0), (1.5, 2.0)], grid.moneyness()),
            row_from_atoms(&[(0.1, 1.0), (2.0, 1.0)], grid.moneyness()),
        ],
    );
    let b = NormalizedSurface::from_model(
        grid.clone(),
        vec![
            row_from_atoms(&[(0.9, 1.0), (1.1, 1.0)], grid.moneyness()),
            row_from_atoms(&[(0.5, 1.0), (1.2, 1.0)], grid.moneyness()),
            row_from_atoms(&[(0.05, 1.0), (1.4, 3.0)], grid.moneyness()),
        ],
    );
    let q = penalty_structured(&a, &b, &cfg(1.0)).unwrap();
    let oracle = brute_force(&a, &b, 200, 500);
    assert!((q - oracle).abs() < 1e-6, "{q} vs {oracle}");
}

#[test]
fn naive_penalty_grows_under_refinement_with_noise() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let cfg = PenaltyConfig {
        weights: vec![1e-3],
        ..Default::default()
    };
    let mut totals = Vec::new();
    for n in [7usize, 70, 700] {
        let market: Vec<f64> = (0..n).map(|i| 0.5 - 0.4 * i as f64 / n as f64).collect();
        let model: Vec<f64> = market
            .iter()
            .map(|v| v + rng.random_range(-1e-3..1e-3))
            .collect();
        totals.push(penalty_naive(&model, &market, &cfg).unwrap());
    }
    assert!(
        totals[1] > 5.0 * totals[0] && totals[2] > 5.0 * totals[1],
        "{totals:?}"
    );
}

#[test]
fn calibrated_lambda_balances_a_black_scholes_world() {
    let truth = ModelInstance::parse_line("black_scholes,sigma=0.2").unwrap();
    let synth = SynthConfig {
        n_days: 120,
        seed: 11,
        noise: 0.002,
        ..Default::default()
    };
    let data = generate_synthetic(&truth, &synth).unwrap();
    let universe =
        PreparedUniverse::new(vec![truth.clone()], &synth.grid, TRADING_DAY, 0.0).unwrap();
    let cal = calibrate_lambda(
        &data,
        &universe,
        LambdaScope::Family(ModelFamily::BlackScholes),
        -7000.0,
    )
    .unwrap();
    assert_eq!(cal.lambda, cal.mean_abs_log_density / cal.mean_penalty);

    // recompute both columns through the engine at the calibrated λ
    let config = EngineConfig {
        lambda: cal.lambda,
        ..Default::default()
    };
    let days: Vec<MarketDay> = data.iter().map(|o| MarketDay::new(o).unwrap()).collect();
    let (mut moves, mut options) = (0.0, 0.0);
    for w in days.windows(2) {
        let inc = universe.increments(&w[0], &w[1], &config).unwrap();
        moves += inc[0].log_density.abs();
        options += inc[0].penalty;
    }
    let ratio = moves / options;
    assert!((0.5..=2.0).contains(&ratio), "ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn penalty_is_bounded_symmetric_and_linear(
        (a, b) in (surface_on(&OptionGrid::default()), surface_on(&OptionGrid::default())),
        lambda in 1e-3f64..1e3,
    ) {
        let t = OptionGrid::default().max_expiry();
        let q = penalty_structured(&a, &b, &cfg(lambda)).unwrap();
        prop_assert!(q >= 0.0 && q <= 2.0 * lambda * t, "{} > {}", q, 2.0 * lambda * t);
        prop_assert_eq!(q, penalty_structured(&b, &a, &cfg(lambda)).unwrap());
        let q1 = penalty_structured(&a, &b, &cfg(1.0)).unwrap();
        prop_assert!((q - lambda * q1).abs() <= 1e-12 * q.max(1e-300));
        prop_assert_eq!(penalty_structured(&a, &a, &cfg(lambda)).unwrap(), 0.0);
    }

    #[test]
    fn refinement_leaves_the_penalty_unchanged(
        (a, b) in (surface_on(&OptionGrid::default()), surface_on(&OptionGrid::default())),
        k_new in 0.801f64..1.199,
    ) {
        prop_assume!(OptionGrid::default().moneyness().iter().all(|k| (k - k_new).abs() > 1e-3));
        let q = penalty_structured(&a, &b, &cfg(1.0)).unwrap();
        let r = penalty_structured(&refine(&a, k_new), &refine(&b, k_new), &cfg(1.0)).unwrap();
        prop_assert!((q - r).abs() <= 1e-12, "{} vs {}", q, r);
    }
}
