//! Experiment harness: configuration, continual runs, sweeps, ablation
//! suites and reports.

pub mod ablate;
pub mod commands;
pub mod config;
pub mod experiment;
pub mod output;
pub mod report;

pub use config::{ConfigError, Method, RunConfig};
pub use experiment::{run_continual, RunRecord, TaskRecord};
