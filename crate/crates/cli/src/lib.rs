//! Command-line front end: configuration files, benchmark runs with CSV
//! artifacts, gradient checks and run reports.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod report;
pub mod run;

pub use config::{Benchmark, ModeKind, RunConfig};
pub use error::{CliError, Result};
