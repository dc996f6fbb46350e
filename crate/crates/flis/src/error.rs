use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how the CLI reports them: bad caller input
/// (exit code 2), malformed files (exit code 3), and numerical failures
/// that indicate an internal problem (exit code 1).
#[derive(Debug, Error)]
pub enum FlisError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("class {class} in partition {partition} has no training samples")]
    DegenerateClass { partition: usize, class: String },

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("{path}: {what}")]
    PgmFormat { path: PathBuf, what: String },

    #[error("bad model magic (not a model file)")]
    BadMagic,

    #[error("unsupported model version {0}")]
    VersionMismatch(u32),

    #[error("model header: {0}")]
    Header(String),

    #[error("model file truncated in partition {partition} ({matrix} matrix)")]
    Truncated { partition: usize, matrix: &'static str },

    #[error("trailing bytes after final partition")]
    TrailingData,

    #[error("singular system in {0}")]
    Singular(&'static str),

    #[error("dictionary update received a non-PSD coefficient Gram (lambda_min = {lambda_min:.3e})")]
    NotPsd { lambda_min: f64 },
}

impl FlisError {
    /// Process exit code the CLI maps this error to.
    /// 1 = internal numerical failure, 2 = bad input, 3 = malformed file.
    pub fn exit_code(&self) -> i32 {
        use FlisError::*;
        match self {
            InvalidArgument(_) | Config(_) | Io { .. } | DegenerateClass { .. }
            | UndefinedMetric(_) => 2,
            PgmFormat { .. } | BadMagic | VersionMismatch(_) | Header(_)
            | Truncated { .. } | TrailingData => 3,
            Singular(_) | NotPsd { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FlisError::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, FlisError>;
