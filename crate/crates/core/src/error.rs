use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed group or algebra element: {0}")]
    MalformedElement(String),

    #[error("outside injectivity radius of the logarithm (trace(R) = {trace:.6})")]
    InjectivityRadius { trace: f64 },

    #[error("Bernoulli series divergence risk: angular norm {norm:.6} >= 2*pi")]
    DivergenceRisk { norm: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("physically inconsistent inertia: {0}")]
    PhysicalInconsistency(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("numerical failure at step {step} (t = {time:.4} s): {message}")]
    Numerical {
        step: usize,
        time: f64,
        message: String,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for numerical breakdown.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical { .. }
            | Error::Singular(_)
            | Error::DivergenceRisk { .. }
            | Error::InjectivityRadius { .. } => 3,
            _ => 2,
        }
    }

    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
