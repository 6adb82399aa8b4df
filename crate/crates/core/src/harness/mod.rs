//! Experiment configuration, execution, metrics, export, and matrix caching.

pub mod cache;
pub mod config;
pub mod export;
pub mod metrics;
mod runner;

pub use cache::MatrixCache;
pub use config::{ExperimentConfig, ExperimentKind, InitialDensity, MediaConfig};
pub use metrics::{asymmetry_norm, error_norm, fit_rate};
pub use runner::{assemble_only, run_experiment, RateRecord, RunOptions, RunRecord, RunReport};
