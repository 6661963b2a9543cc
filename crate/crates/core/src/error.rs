use thiserror::Error;

/// Errors produced by estimation, simulation and tuning routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input data violates a documented precondition (non-positive entries,
    /// rows off the simplex, ragged blocks, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Arguments lie outside the domain an operation is defined on.
    #[error("domain error: {0}")]
    Domain(String),
    /// Tensor or matrix shapes disagree.
    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },
    /// A numerical routine failed (eigensolver, backtracking, non-finite values).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// Prefix the message with extra context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{ctx}: {m}")),
            Error::Domain(m) => Error::Domain(format!("{ctx}: {m}")),
            Error::Numeric(m) => Error::Numeric(format!("{ctx}: {m}")),
            Error::Shape { expected, found } => Error::Shape {
                expected: format!("{ctx}: {expected}"),
                found,
            },
        }
    }
}
