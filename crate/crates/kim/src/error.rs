use thiserror::Error;

/// Error type shared by every module in the crate.
///
/// The variants map one-to-one onto the CLI exit codes: bad input and I/O
/// problems exit with 4, solver failures with 2, positivity violations with 3.
#[derive(Debug, Error)]
pub enum KimError {
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("positivity violation: {0}")]
    PositivityViolation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl KimError {
    /// Process exit code associated with this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            KimError::BadInput(_) | KimError::Io(_) => 4,
            KimError::SolverFailure(_) => 2,
            KimError::PositivityViolation(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, KimError>;
