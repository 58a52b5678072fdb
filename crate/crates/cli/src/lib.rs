//! Experiment harness for the `twostep` library.
//!
//! Each subcommand of the `twostep` binary maps to a `run_*` function in
//! [`commands`] that returns in-memory tables, and a `write_*` function that
//! stores them as CSV.

pub mod commands;
pub mod error;
pub mod tables;

pub use error::{CliError, CliResult};
