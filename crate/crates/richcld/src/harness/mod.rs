//! Experiment driver: configuration files, run directories and the bodies of
//! the command-line subcommands.

pub mod commands;
pub mod config;
pub mod representation;
pub mod theory;

pub use commands::{plan, run, RunOptions, RunReport, VERSION};
pub use config::{Algorithm, Command, ExperimentConfig};
