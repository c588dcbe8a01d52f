//! File formats, parallel experiment runners and the `mico` command-line
//! tool built on [`mico_core`].

pub mod bench;
pub mod cli;
pub mod commands;
pub mod error;
pub mod experiments;
pub mod io;
pub mod parallel;
pub mod sources;
pub mod validate;

pub use error::{CliError, CliResult};
