use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("{context}: {message}")]
    Input { context: String, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for unreadable or malformed inputs, 1 for checks that failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Config(_) | CliError::Input { .. } => 2,
            CliError::Validation(_) | CliError::Failed(_) => 1,
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn input(context: impl Into<String>, err: impl std::fmt::Display) -> Self {
        CliError::Input { context: context.into(), message: err.to_string() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
