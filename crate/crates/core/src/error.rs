use std::path::PathBuf;

use crate::decoupler::DecouplerModel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("sensitive class {class} has {count} member(s), need at least {required}")]
    ClassTooSmall {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("class {0} is empty")]
    EmptyClass(usize),

    #[error("unknown class id {class} (have {classes} classes)")]
    UnknownClass { class: usize, classes: usize },

    #[error("missing labels: {0}")]
    MissingLabels(String),

    #[error("unsupported mechanism: {0}")]
    UnsupportedMechanism(String),

    #[error("loss must be a scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite value during training: {diagnostic}")]
    NonFinite {
        diagnostic: String,
        last_good: Option<Box<DecouplerModel>>,
    },

    #[error("bad format: {0}")]
    Format(String),

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("checksum mismatch for {0}")]
    Checksum(String),

    #[error("truncated blob: {0}")]
    Truncated(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

macro_rules! shape_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Shape(format!($($arg)*))
    };
}
pub(crate) use shape_err;
