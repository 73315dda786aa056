//! Command-line front end for `d4-core`.

pub mod commands;
pub mod error;
pub mod files;

pub use commands::{run, Cli};
pub use error::CliError;
