//! Shared fixtures for the benchmarks under `benches/`.

use modelmix::engine::MarketDay;
use modelmix::market_data::TRADING_DAY;
use modelmix::{generate_synthetic, ModelFamily, ModelInstance, PreparedUniverse, SynthConfig};

/// One typical instance per family.
pub fn typical_instances() -> Vec<ModelInstance> {
    ModelFamily::ALL.iter().map(|f| f.typical()).collect()
}

/// `n` Heston instances spread over a line in (theta, v0).
pub fn heston_line(n: usize) -> Vec<ModelInstance> {
    (0..n)
        .map(|i| {
            let x = 0.02 + 0.06 * i as f64 / n.max(2) as f64;
            ModelInstance::parse_line(&format!(
                "heston,kappa=2,theta={x},sigma_v=0.4,rho=-0.7,v0={x}"
            ))
            .expect("admissible")
        })
        .collect()
}

pub fn synthetic_days(n: usize) -> Vec<MarketDay> {
    let truth = ModelInstance::parse_line("heston,kappa=2,theta=0.04,sigma_v=0.4,rho=-0.7,v0=0.04")
        .expect("admissible");
    let cfg = SynthConfig {
        n_days: n,
        noise: 0.002,
        ..Default::default()
    };
    generate_synthetic(&truth, &cfg)
        .expect("synthetic data")
        .iter()
        .map(|o| MarketDay::new(o).expect("valid day"))
        .collect()
}

pub fn prepare(instances: Vec<ModelInstance>) -> PreparedUniverse {
    PreparedUniverse::new(
        instances,
        &modelmix::OptionGrid::default(),
        TRADING_DAY,
        0.0,
    )
    .expect("universe prices")
}
