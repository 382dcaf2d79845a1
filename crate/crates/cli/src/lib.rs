//! Library side of the `sps` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;
pub mod run;

pub use cli::Cli;
pub use error::{CliError, CliResult};
