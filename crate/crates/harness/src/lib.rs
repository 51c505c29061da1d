//! Experiment runner, SVG renderers and command-line front end for the
//! `bbplan-core` search engine.

pub mod config;
pub mod experiment;
pub mod render;
pub mod stats;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, summarise, ResultRow, Summary};
