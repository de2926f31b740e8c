//! Configuration, CSV export, sweeps and subcommand dispatch for the
//! `habit` command-line tool.

pub mod commands;
pub mod config;
pub mod export;
pub mod sweep;

pub use commands::{run, CliError, Command};
pub use config::{ConfigError, RunConfig};
