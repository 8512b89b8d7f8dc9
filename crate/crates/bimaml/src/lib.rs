//! Experiment harness for `bimaml-core`: configuration, IDX ingestion,
//! orchestration of incremental, control and meta-test runs, checkpoints
//! and CSV reports.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
