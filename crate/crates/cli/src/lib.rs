//! Experiment runner for distributed adaptive signal fusion studies: TOML
//! config ingestion, seeded Monte-Carlo orchestration over a bounded worker
//! pool, and CSV/gnuplot output.

pub mod config;
pub mod study;

pub use config::{load_config, validate_config, ConfigError, ExperimentConfig, Overrides, RawConfig};
pub use study::{execute_run, run_study, run_tracking, StudyError, StudyResult};
