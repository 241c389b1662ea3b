use thiserror::Error;

/// Errors produced by the file-format readers and writers.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("checksum mismatch")]
    BadChecksum,
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("trailing bytes after payload: {0}")]
    TrailingBytes(usize),
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("duplicate record name {0:?}")]
    DuplicateName(String),
    #[error("malformed manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("unknown parameter {0:?}")]
    UnknownParameter(String),
    #[error("{0}")]
    Unsupported(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io { path: path.as_ref().display().to_string(), source }
    }

    /// Stable machine-readable kind, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "shape",
            Error::Contract(_) => "contract",
            Error::NonFinite(_) => "non_finite",
            Error::NonFiniteLoss(_) => "non_finite_loss",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Singular(_) => "singular",
            Error::UnknownParameter(_) => "unknown_parameter",
            Error::Unsupported(_) => "unsupported",
            Error::Format(f) => match f {
                FormatError::BadMagic { .. } => "bad_magic",
                FormatError::UnsupportedVersion(_) => "unsupported_version",
                FormatError::BadChecksum => "bad_checksum",
                FormatError::Truncated { .. } => "truncated",
                FormatError::TrailingBytes(_) => "trailing_bytes",
                FormatError::UnknownDtype(_) => "unknown_dtype",
                FormatError::DuplicateName(_) => "duplicate_name",
                FormatError::Manifest(_) => "manifest",
            },
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
