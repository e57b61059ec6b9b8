use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("expected {expected} data bits, got {found}")]
    BitCount { expected: usize, found: usize },

    #[error("DFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("channel profile has no paths")]
    EmptyProfile,

    #[error("tap delay of {delay} samples does not fit in the {cp}-sample cyclic prefix")]
    DelayExceedsCp { delay: usize, cp: usize },

    #[error("pilot value at cell ({row}, {col}) is zero")]
    ZeroPilot { row: usize, col: usize },

    #[error("matrix is singular to working precision (column {column})")]
    Singular { column: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("reference channel has zero norm")]
    ZeroNorm,

    #[error("no word length satisfies the error criterion: {0}")]
    NoFormat(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line tool: 3 for numerical
    /// failures, 2 for everything caused by bad input or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Singular { .. } | Error::NonFinite(_) | Error::ZeroNorm | Error::NoFormat(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn shape(expected: impl std::fmt::Display, found: impl std::fmt::Display) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
