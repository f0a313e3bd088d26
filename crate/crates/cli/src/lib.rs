//! Experiment driver for the `cgx` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;

pub use cli::{execute, run, Cli, Command};
pub use config::{DatasetSpec, ExperimentConfig, MetricsConfig, Overrides};
pub use error::{CliError, CliResult, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
