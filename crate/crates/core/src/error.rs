use thiserror::Error;

use crate::param::VarId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("unknown activation `{0}`")]
    UnknownActivation(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not symmetric (asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("variable `{0}` has no value in the assignment")]
    MissingVariable(VarId),

    #[error("variable `{0}` violates its nonnegativity cone (value {1:e})")]
    ConeViolation(VarId, f64),

    #[error("variable `{0}` is declared more than once")]
    VariableCollision(VarId),

    #[error("variable `{0}` is referenced but never declared")]
    UndeclaredVariable(VarId),

    #[error("set is empty")]
    EmptySet,

    #[error("set is unbounded")]
    Unbounded,

    #[error("{count} unknown neurons exceed the enumeration limit of {max}")]
    TooManyUnknown { count: usize, max: usize },

    #[error("label {label} is not the predicted class {predicted}")]
    LabelMismatch { label: usize, predicted: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Parse(err.to_string())
    }
}
