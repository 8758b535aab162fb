//! Command-line front end: configuration, dispatch and file emission.

pub mod commands;
pub mod config;

use std::io;

use thiserror::Error;

pub use commands::run;
pub use config::{parse_config, CommandName, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("{0}")]
    Compute(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => 2,
            Self::Clap(e) => e.exit_code(),
            Self::Compute(_) | Self::Io { .. } => 1,
        }
    }
}

/// Parses, runs and reports; returns the process exit status.
pub fn main_with<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let result = parse_config(args).and_then(|cfg| run(&cfg));
    match result {
        Ok(()) => 0,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            eprintln!("gsbq: {e}");
            e.exit_code()
        }
    }
}
