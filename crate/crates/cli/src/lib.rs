//! Configuration and subcommand implementations behind the `nnflow` binary.

pub mod commands;
pub mod config;

pub use config::{apply_override, CompleteConfig, RunConfig};
