use std::path::PathBuf;

/// Errors raised anywhere in the library.
///
/// Variants are grouped so the command-line front end can map them onto
/// exit codes with [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("input {height}x{width} is smaller than the minimum {min}x{min}")]
    UndersizedInput {
        height: usize,
        width: usize,
        min: usize,
    },

    #[error("missing parameter tensor `{0}`")]
    MissingParameter(String),

    #[error("archive: {0}")]
    Archive(String),

    #[error("archive checksum mismatch: manifest says {expected}, blob hashes to {actual}")]
    ChecksumMismatch { expected: String, actual: String },

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("unknown weight set `{0}`")]
    UnknownWeightSet(String),

    #[error("cannot decode image {source_id}: {reason}")]
    Decode { source_id: String, reason: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("undefined result: {0}")]
    Undefined(String),

    #[error("{id}: {source}")]
    Item {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attach the id of the file or stimulus that caused the error.
    pub fn for_item(self, id: impl Into<String>) -> Self {
        Error::Item {
            id: id.into(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 2 input validation, 3 computation domain, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Item { source, .. } => source.exit_code(),
            Error::Undefined(_) => 3,
            Error::Io { .. } => 4,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
