use std::path::PathBuf;

use sanitizer_core::Error as CoreError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;
pub const EXIT_MECHANISM: i32 = 5;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("mechanism error: {0}")]
    Mechanism(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Numeric(_) => EXIT_NUMERIC,
            CliError::Mechanism(_) => EXIT_MECHANISM,
            CliError::Core(e) => match e {
                CoreError::Io { .. }
                | CoreError::Format(_)
                | CoreError::UnsupportedVersion { .. }
                | CoreError::Checksum(_)
                | CoreError::Truncated(_) => EXIT_IO,
                CoreError::NonFinite { .. } | CoreError::NonScalarLoss { .. } => EXIT_NUMERIC,
                CoreError::ClassTooSmall { .. } | CoreError::UnsupportedMechanism(_) => EXIT_MECHANISM,
                _ => EXIT_CONFIG,
            },
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
