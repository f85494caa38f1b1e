//! Command-line front end: TOML scenario configs, subcommands and artifacts.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{
    run_alpha_sweep, run_conditions, run_oracle_compare, run_synthesize, run_verify, RunOptions,
};
pub use config::ScenarioConfig;
pub use error::{CliError, CliResult};
