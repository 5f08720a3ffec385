//! Configuration, canonical storage and subcommands behind the `nnqf`
//! binary.

pub mod commands;
pub mod config;
mod error;
pub mod store;

pub use error::{CliError, CliResult};
