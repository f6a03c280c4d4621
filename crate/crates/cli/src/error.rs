use std::path::PathBuf;

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },

    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] memstpn::Error),
}

impl CliError {
    pub fn config(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Core(memstpn::Error::io(path, source))
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Usage(_) => "usage",
            CliError::Core(e) => e.category(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        exit_code(self.category())
    }
}

/// Process exit status for an error category.
pub fn exit_code(category: &str) -> i32 {
    match category {
        "config" | "usage" => 2,
        "device" => 3,
        "shape" => 4,
        "lookup" => 5,
        "numeric" => 6,
        "environment" => 7,
        "fit" => 8,
        "data" => 9,
        "unsupported" => 10,
        "io" => 11,
        _ => 1,
    }
}
