//! Library side of the milpool experiment runner: experiment configuration,
//! plain-text file formats, and the subcommand implementations.

#![allow(clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::CliError;
