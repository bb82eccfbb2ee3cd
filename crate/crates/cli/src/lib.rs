//! Command-line driver for the OTFS antenna selection experiments.

pub mod commands;
pub mod config;
pub mod output;
pub mod presets;

pub use config::ExperimentConfig;
