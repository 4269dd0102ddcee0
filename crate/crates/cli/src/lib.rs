//! Orchestration for the `txscope` command-line tool.

pub mod analyze;
pub mod bundle;
pub mod commands;
pub mod config;
pub mod correlate;

pub use analyze::{analyze, exit_status, CliError};
pub use bundle::Manifest;
pub use config::{Metric, RunConfig};
