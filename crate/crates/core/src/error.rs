use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised across the toolkit.
///
/// Variants map onto the process exit codes used by the `smad` binary
/// (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (non-positive scale, too few identities, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Geometric input that cannot support the requested fit or triangulation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Manifest, protocol or score data that does not join up.
    #[error("data integrity error: {0}")]
    Integrity(String),

    /// Missing scores for protocol paths. Paths are listed in full.
    #[error("missing scores for {} protocol path(s): {}", .0.len(), .0.join(", "))]
    MissingScores(Vec<String>),

    /// Shape or ordering contract broken by a caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values encountered during optimization.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// The model does not expose the requested capability.
    #[error("capability error: {0}")]
    Capability(String),

    #[error("malformed file {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Process exit code: 2 usage, 3 data integrity, 4 numeric, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Contract(_) | Error::Capability(_) => 2,
            Error::Integrity(_)
            | Error::MissingScores(_)
            | Error::Format { .. }
            | Error::Json(_)
            | Error::Csv(_) => 3,
            Error::Numeric(_) | Error::Degenerate(_) => 4,
            Error::Io { .. } | Error::Image { .. } => 1,
        }
    }
}
