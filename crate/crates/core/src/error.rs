use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// The CLI maps these onto process exit codes: invalid input and budget
/// violations exit 2, `PrecisionExhausted` exits 3, I/O failures exit 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid family: {0}")]
    InvalidFamily(String),

    #[error("invalid twist: {0}")]
    InvalidTwist(String),

    /// The local-point enumeration hit its precision cap before reaching
    /// half dimension. Raising the cap is the remedy; this is diagnostic,
    /// not a silent wrong answer.
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("oracle too large: {0}")]
    OracleTooLarge(String),

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("unsupported family: {0}")]
    UnsupportedFamily(String),

    /// A resume target exists but was produced by a different configuration.
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::PrecisionExhausted(_) => 3,
            Error::Io(_) => 4,
            _ => 2,
        }
    }
}
