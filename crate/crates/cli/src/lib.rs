//! File formats, configuration and subcommands for the `crosstask` tool.

pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod gradcheck;
pub mod io;
pub mod manifest;
pub mod pool;
pub mod render;

pub use config::RunConfig;
pub use error::{CliError, ExitStatus};
