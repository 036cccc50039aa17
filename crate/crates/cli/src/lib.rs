//! Configuration-driven runner for the driftlab estimate checks.
//!
//! A run reads one TOML experiment, validates every requested check up
//! front, runs them stage by stage on a bounded thread pool, and writes
//! `reports/<check>.json`, `summary.csv` and `manifest.json`.

pub mod catalog;
pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod run;

pub use config::{Experiment, ExperimentConfig};
pub use error::CliError;
pub use report::{report, Format};
pub use run::{run, RunManifest, RunOptions, RunOutcome};
