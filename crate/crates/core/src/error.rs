//! Shared error type for loaders, the assessment engine, and the statistics kernel.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input document; the serde error carries line/column context.
    #[error("malformed {context}: {source}")]
    Parse {
        context: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("duplicate {kind} id {id:?}")]
    DuplicateId { kind: &'static str, id: String },

    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },

    /// A required subject/aspect/pattern set is not fully covered.
    #[error("{context}: missing {}", missing.join(", "))]
    Coverage {
        context: String,
        missing: Vec<String>,
    },

    #[error("panel contains no estimate sets")]
    EmptyPanel,

    #[error("{context}: {value} outside [{min}, {max}]")]
    OutOfRange {
        context: String,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("integrity violation: {0}")]
    Integrity(String),

    #[error("vectors have different lengths ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("degenerate statistics input: {0}")]
    DegenerateInput(String),

    /// A diagram failed validation; `violations` holds the rendered report lines.
    #[error("diagram {diagram:?} is invalid:\n{}", violations.join("\n"))]
    InvalidDiagram {
        diagram: String,
        violations: Vec<String>,
    },
}

impl Error {
    /// True for errors produced by statistical computations on degenerate
    /// input (as opposed to file, schema, or cross-reference problems).
    pub fn is_statistical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateInput(_) | Error::LengthMismatch { .. }
        )
    }

    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Parse {
            context: context.into(),
            source,
        }
    }
}
