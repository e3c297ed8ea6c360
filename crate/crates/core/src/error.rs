use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("non-triangular face at line {line} ({count} vertices)")]
    NonTriangularFace { line: usize, count: usize },

    #[error("triangle {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },

    #[error("mesh is empty after removing degenerate triangles")]
    EmptyMesh,

    #[error("mesh has zero extent (all vertices coincide)")]
    ZeroExtent,

    #[error("inconsistent winding: signed volume {0:.3e} is not positive")]
    InvertedWinding(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss {loss} at iteration {iteration}")]
    NonFinite { iteration: usize, loss: f64 },

    #[error("representation is not quantized; only quantized reps can be serialized")]
    NotQuantized,

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("truncated file: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{field} code {code} out of range")]
    CodeOutOfRange { field: &'static str, code: u32 },

    #[error("malformed file: {0}")]
    Malformed(String),
}

/// Coarse error category, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    BadInput,
    Numeric,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io { .. } => ErrorClass::Io,
            Error::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::BadInput,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
