//! Command line front end: scenario files, NtD caching, result artifacts
//! and exit codes.

pub mod args;
pub mod artifacts;
pub mod cache;
pub mod commands;
pub mod config;
pub mod error;

pub use args::Cli;
pub use commands::run;
pub use error::{exit, CliError, CliResult};
