//! File formats, experiment runner and command line for `ifial-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod manifest;
pub mod results;
pub mod runner;

pub use error::{CliError, Result};
