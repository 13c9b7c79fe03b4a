//! Configuration, orchestration and persistence for the `nullcone` command
//! line runner.

pub mod config;
pub mod error;
pub mod run;

pub use config::{parse_config, RunConfig};
pub use error::CliError;
pub use run::{configure_threads, run, RunManifest};
