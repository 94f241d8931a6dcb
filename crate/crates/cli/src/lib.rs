//! Front end of the `isofisher` binary: configuration, subcommands and SVG output.

pub mod commands;
pub mod config;
pub mod error;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
