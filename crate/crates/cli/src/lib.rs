//! Experiment orchestration for the LSTM nudging pipeline: configuration,
//! cached stages, sweeps and reports.

pub mod cache;
pub mod config;
pub mod pipeline;
pub mod sweep;

pub use config::{ConfigFile, ExperimentConfig};
pub use pipeline::{run_pipeline, run_stage, ExperimentReport, Stage};
