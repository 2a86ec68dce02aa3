use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (u16, u16),
        found: (u16, u16),
    },

    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("syntax error at position {position}: expected {expected}, found {found}")]
    Syntax {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("unknown concept `{0}`")]
    UnknownConcept(String),

    #[error("unknown concept id {0}")]
    UnknownConceptId(u32),

    #[error("unknown unit {0}")]
    UnknownUnit(u32),

    #[error("activation volume is empty")]
    EmptyActivations,

    #[error("invalid quantile {0}: must lie strictly between 0 and 1")]
    InvalidQuantile(f64),

    #[error("explanation occurs in no image")]
    NoSupport,

    #[error("concept catalog has no searchable concepts")]
    EmptyCatalog,

    #[error("instance too large for exhaustive search: {concepts} concepts, length {length}")]
    InstanceTooLarge { concepts: usize, length: usize },

    #[error("invalid search config: {0}")]
    InvalidConfig(String),

    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),

    #[error("catalog parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate concept name `{0}`")]
    DuplicateName(String),

    #[error("concept ids are not dense from 0: expected {expected}, found {found}")]
    NonDenseIds { expected: u32, found: u32 },

    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {0}")]
    VersionUnsupported(u16),

    #[error("non-finite activation for unit {unit}, image {image}")]
    NonFiniteValue { unit: u32, image: u32 },

    #[error("image set mismatch: {0}")]
    ImageSetMismatch(String),

    #[error("duplicate image id {0}")]
    DuplicateImage(u32),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("malformed report: {0}")]
    MalformedReport(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class: 1 usage, 2 I/O or format, 3 data validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Syntax { .. } | Error::InvalidQuantile(_) | Error::InvalidConfig(_) => 1,
            Error::Io { .. }
            | Error::BadMagic { .. }
            | Error::VersionUnsupported(_)
            | Error::LengthMismatch(_)
            | Error::Parse { .. }
            | Error::Corrupt(_)
            | Error::MalformedReport(_) => 2,
            _ => 3,
        }
    }
}
