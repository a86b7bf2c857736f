//! Dataset loaders, width-sweep experiments, result persistence and the
//! `wideconv` command line, built on [`wideconv_core`].

pub mod config;
pub mod data;
pub mod experiments;
pub mod persist;
pub mod report;

pub use config::ExperimentConfig;
pub use experiments::{run_experiment, RunOutput};
