//! Command-line front end: run configurations, reports and exports.

pub mod commands;
pub mod config;
pub mod error;

pub use error::CliError;

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "HERALD_THREADS";
