//! Experiment runner for the `particle-em` library: TOML experiment files,
//! output writers, spectral tables and self-check suites.

pub mod config;
pub mod error;
pub mod experiment;
pub mod spectral;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult, FailureKind};
pub use experiment::{run_experiment, Report};
