//! Command-line driver for the multiplexed single-photon source model.
//!
//! Subcommands: `dist`, `optimize`, `sweep`, `figure`, `montecarlo` and
//! `validate`. Settings come from a `key = value` file (`--config`) and are
//! overridden by `--key value` flags.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;

pub use cli::{main_with, Cli};
pub use commands::{run, ErrorRecord, Rendered};
pub use config::{parse_config, Command, ConfigError, OutputFormat, RunConfig};
