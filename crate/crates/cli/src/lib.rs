//! Library side of the `deferkit` binary: experiment configuration, presets
//! and one function per subcommand.

pub mod commands;
pub mod config;

pub use commands::{CliError, CliResult, OUTPUT_ROOT_ENV};
pub use config::{preset, resolve, ExperimentConfig, Method, PRESETS};
