//! Command-line frontend: configuration, the `simulate` / `identify` /
//! `evaluate` subcommands and their output artifacts.

pub mod commands;
pub mod config;
pub mod output;

use std::sync::OnceLock;

/// CLI failure classes, mapped onto process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or incomplete configuration (exit 2).
    Config(String),
    /// Unreadable, malformed or mismatched data files (exit 3).
    Data(String),
    /// Numerical abort: solver or sampler collapse (exit 4).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical abort: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<pnid_core::data::DataError> for CliError {
    fn from(e: pnid_core::data::DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<pnid_core::smc::SmcError> for CliError {
    fn from(e: pnid_core::smc::SmcError) -> Self {
        use pnid_core::smc::SmcError;
        match e {
            SmcError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

static THREAD_POOL: OnceLock<usize> = OnceLock::new();

/// Initialize the global worker pool once; `threads` of 0 keeps the default
/// (all cores). Later calls are no-ops, so in-process reuse stays safe.
pub fn init_threads(threads: usize) {
    THREAD_POOL.get_or_init(|| {
        if threads > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
        }
        threads
    });
}
