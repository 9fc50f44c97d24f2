//! Run orchestration behind the command-line tool.

mod build;
mod config;
mod run;

pub use build::{run_build, BuildSettings};
pub use config::FlatConfig;
pub use run::{run, LambdaSetting, RunConfig, RunSummary};
