//! Configuration files, result files and the command workflows of the
//! `cloudpriv` binary. The numerics live in [`cloudpriv_core`].

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use cloudpriv_core;
pub use error::{CliError, CliResult};
