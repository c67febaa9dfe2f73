//! Library side of the `sotif` command: batch commands and the interactive
//! session server. The binary in `main.rs` only parses flags and maps
//! results to exit codes.

pub mod commands;
pub mod serve;

use std::path::{Path, PathBuf};

/// Process exit codes. Every way the binary can terminate maps to one of
/// these.
pub mod exit {
    pub const OK: i32 = 0;
    /// `run-series` finished and the series verdict is FAIL.
    pub const SERIES_FAIL: i32 = 1;
    /// Invalid flags, configuration, schema or input data.
    pub const INVALID_INPUT: i32 = 2;
    /// The episode could not be simulated or classified.
    pub const EPISODE_ERROR: i32 = 3;
    /// Reading inputs succeeded but writing outputs or binding the socket
    /// failed.
    pub const IO_ERROR: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("episode error: {0}")]
    Episode(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => exit::INVALID_INPUT,
            CliError::Episode(_) => exit::EPISODE_ERROR,
            CliError::Io { .. } => exit::IO_ERROR,
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Reads an input file; a missing or unreadable input is an input error.
pub(crate) fn read_input(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))
}

pub(crate) fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}
