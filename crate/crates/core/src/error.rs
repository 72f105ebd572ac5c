use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A constructor or loader rejected a value; `invariant` names the violated rule.
    #[error("invalid {what}: {invariant}")]
    Invalid { what: &'static str, invariant: String },

    #[error("unsupported input dimension {got}: this operation requires input dimension {required}")]
    UnsupportedDimension { got: usize, required: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, invariant: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            invariant: invariant.into(),
        }
    }

    pub(crate) fn shape(context: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            context,
            expected,
            got,
        }
    }
}

pub(crate) fn check_finite_input(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Domain(format!("input coordinate {i} is not finite"))),
        None => Ok(()),
    }
}
