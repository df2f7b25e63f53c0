use std::path::{Path, PathBuf};

use gphlvm::ErrorClass;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] gphlvm::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Config(_) => ErrorClass::Validation,
            CliError::Io { .. } => ErrorClass::Io,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Numerical => 3,
            ErrorClass::Io => 4,
        }
    }

    /// `error[<class>]: <message>` on one line.
    pub fn report(&self) -> String {
        let class = match self.class() {
            ErrorClass::Validation => "validation",
            ErrorClass::Numerical => "numerical",
            ErrorClass::Io => "io",
        };
        let msg = self.to_string().split_whitespace().collect::<Vec<_>>().join(" ");
        format!("error[{class}]: {msg}")
    }
}

pub fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.into(), source })
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io { path: path.into(), source })
}
