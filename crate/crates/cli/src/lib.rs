//! Pipeline commands behind the `latentroute` binary.

pub mod commands;
pub mod config;
pub mod error;
mod outdir;

pub use config::RunConfig;
pub use error::CliError;
pub use outdir::OutDir;

pub const TOOL_VERSION: &str = concat!("latentroute ", env!("CARGO_PKG_VERSION"));
