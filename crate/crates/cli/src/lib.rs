//! Command-line front end: configuration loading, command dispatch and JSON
//! reports.

pub mod commands;
pub mod config;
pub mod report;

use villadsen_core::Error;

pub use commands::{execute, Cli, Command};
pub use config::{parse_config, Loaded, SystemConfig, CONFIG_SCHEMA_VERSION};
pub use report::{Report, Verdict, REPORT_SCHEMA};

/// Process exit statuses.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAIL: i32 = 1;
    pub const INPUT: i32 = 2;
    pub const RESOURCE: i32 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(Error::ResourceCap(_)) => exit::RESOURCE,
            CliError::Core(Error::HorizonExceeded { .. } | Error::DepthExhausted { .. } | Error::ModeMismatch(_)) => exit::FAIL,
            _ => exit::INPUT,
        }
    }
}
