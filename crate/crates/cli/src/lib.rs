//! Batch runner for the stack-electrode solvers: configuration parsing, dispatch,
//! CSV/JSON artifacts and the figure presets.

pub mod config;
pub mod error;
pub mod manifest;
pub mod output;
pub mod reproduce;
pub mod runner;

pub use config::{parse_config, ExperimentConfig, Model};
pub use error::CliError;
pub use manifest::RunManifest;
pub use reproduce::{reproduce, Figure, Scale};
pub use runner::run_config;
