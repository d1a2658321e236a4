use std::fmt;
use std::io;

/// Crate-wide error type. Variants map onto CLI exit codes: user-input
/// problems exit 1, runtime failures exit 2.
#[derive(Debug)]
pub enum Error {
    /// Invalid spec/config/argument values; message names the violated field.
    Validation(String),
    /// An operation was asked for on an empty slice of data.
    EmptyInput(String),
    /// Matrix dimension mismatch.
    Shape(String),
    /// Out-of-range vocabulary or answer index.
    Index(String),
    /// Malformed file content.
    Parse { context: String, detail: String },
    /// Checksum/fingerprint/length mismatch between related artifacts.
    Integrity(String),
    /// Versioned format the current code cannot read.
    Incompatible(String),
    /// Loss became non-finite during training.
    Divergence(String),
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Validation(m) => write!(f, "validation error: {m}"),
            Error::EmptyInput(m) => write!(f, "empty input: {m}"),
            Error::Shape(m) => write!(f, "shape error: {m}"),
            Error::Index(m) => write!(f, "index error: {m}"),
            Error::Parse { context, detail } => write!(f, "parse error in {context}: {detail}"),
            Error::Integrity(m) => write!(f, "integrity error: {m}"),
            Error::Incompatible(m) => write!(f, "incompatible format: {m}"),
            Error::Divergence(m) => write!(f, "training diverged: {m}"),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {}

impl Error {
    /// Exit code the CLI maps this error to: 1 for bad input, 2 for runtime
    /// failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::EmptyInput(_)
            | Error::Parse { .. }
            | Error::Incompatible(_) => 1,
            Error::Shape(_)
            | Error::Index(_)
            | Error::Integrity(_)
            | Error::Divergence(_)
            | Error::Io(_) => 2,
        }
    }
}

impl From<io::Error> for Error {
    fn from(e: io::Error) -> Self {
        Error::Io(e)
    }
}

impl From<tapegrad::GraphError> for Error {
    fn from(e: tapegrad::GraphError) -> Self {
        match e {
            tapegrad::GraphError::ShapeMismatch { .. } => Error::Shape(e.to_string()),
            tapegrad::GraphError::IndexOutOfRange { .. } => Error::Index(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
