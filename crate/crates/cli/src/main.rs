use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use modelmix::backtest::{run, run_build, BuildSettings, RunConfig};
use modelmix::market_data::write_series;
use modelmix::{generate_synthetic, ModelFamily, ModelInstance, SynthConfig};

/// Bayesian model averaging over a fixed universe of option-pricing models.
#[derive(Debug, Parser)]
#[command(name = "modelmix", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the recursion in every configured mode and write the reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic dataset drawn from one model instance.
    Synth {
        #[arg(long)]
        family: ModelFamily,
        /// Parameters as `name=value,...`.
        #[arg(long, default_value = "")]
        params: String,
        #[arg(long, default_value_t = 250)]
        days: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standard deviation of additive noise on implied vols.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 100.0)]
        spot: f64,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit snapshots, span parameter grids and prune them to a universe.
    BuildUniverse {
        #[arg(long)]
        config: PathBuf,
    },
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let summary = run(&cfg, &out)?;
            println!("lambda {}", summary.lambda);
            for (mode, post) in &summary.final_posteriors {
                let top = post
                    .by_family
                    .iter()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(f, w)| format!("{f} {w:.4}"))
                    .unwrap_or_default();
                println!("{}: leading family {top}", mode.name());
            }
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Synth {
            family,
            params,
            days,
            seed,
            noise,
            spot,
            rate,
            out,
        } => {
            let instance = ModelInstance::parse_line(&format!("{family},{params}"))?;
            let cfg = SynthConfig {
                n_days: days,
                seed,
                noise,
                spot,
                rate,
                ..Default::default()
            };
            let data = generate_synthetic(&instance, &cfg)?;
            write_series(&out, &data).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} days from {instance} to {}",
                data.len(),
                out.display()
            );
        }
        Command::BuildUniverse { config } => {
            let settings = BuildSettings::from_file(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let built = run_build(&settings)?;
            for (f, s) in &built.report.families {
                println!(
                    "{f}: kept {} of {} (distance {:.4})",
                    s.kept, s.candidates, s.distance
                );
            }
            println!(
                "wrote {} instances to {}",
                built.instances().len(),
                settings.out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let category = e.downcast_ref::<modelmix::Error>().map(|m| m.category());
            let label = category.map(|c| c.as_str()).unwrap_or("error");
            eprintln!("modelmix: {label} error: {e:#}");
            ExitCode::from(category.map(|c| c.exit_code()).unwrap_or(1) as u8)
        }
    }
}
