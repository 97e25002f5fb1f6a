//! Experiment harness, file formats and command-line front end for
//! `vcg-core`.

pub mod cli;
pub mod config;
pub mod harness;
pub mod io;
pub mod plot;

pub use config::{parse_config, ExperimentConfig, InstanceSpec};
pub use harness::{run_experiment, ExperimentOutput, ExperimentSummary};
