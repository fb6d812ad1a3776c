//! Configuration, orchestration and file outputs for the `teng` binary.

pub mod config;
pub mod output;
pub mod runner;
pub mod selftest;

pub use config::RunConfig;
pub use output::{export_grid, parse_grid, relative_l2};
pub use runner::{run_experiment, OutputManifest, RunError};
