use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's shape/channel contract.
    #[error("{op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// A parameter value is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A combinatorial guard refused an oversized problem.
    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    /// A weight archive failed validation.
    #[error("weight archive: {0}")]
    Archive(String),

    /// Training aborted (non-finite loss or gradient).
    #[error("training aborted: {0}")]
    Training(String),

    /// I/O failure, annotated with the path involved.
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
