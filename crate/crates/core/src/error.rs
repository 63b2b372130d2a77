use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("source measure is not absolutely continuous: {0}")]
    AbsContinuity(String),
    #[error("problem too large: {0}")]
    Size(String),
    #[error("transport problem infeasible: {0}")]
    Infeasible(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("oracle not applicable: {0}")]
    OracleScope(String),
    #[error("scale must be positive: {0}")]
    Scale(String),
    #[error("zero-sum constraint violated: {0}")]
    Constraint(String),
    #[error("invalid family: {0}")]
    Family(String),
    #[error("rejection sampler too inefficient: {0}")]
    Efficiency(String),
    #[error("outside declared domain: {0}")]
    Domain(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("objective increased: {0}")]
    NoDecrease(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Errors caused by bad input rather than a failure while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::Solver(_) | Error::NoDecrease(_))
    }

    /// Stable integer code, shared with the C interface.
    pub fn code(&self) -> i32 {
        match self {
            Error::Parse(_) => 1,
            Error::Invariant(_) => 2,
            Error::Dimension(_) => 3,
            Error::Range(_) => 4,
            Error::AbsContinuity(_) => 5,
            Error::Size(_) => 6,
            Error::Infeasible(_) => 7,
            Error::Solver(_) => 8,
            Error::OracleScope(_) => 9,
            Error::Scale(_) => 10,
            Error::Constraint(_) => 11,
            Error::Family(_) => 12,
            Error::Efficiency(_) => 13,
            Error::Domain(_) => 14,
            Error::GridMismatch(_) => 15,
            Error::NoDecrease(_) => 16,
            Error::InsufficientData(_) => 17,
            Error::Usage(_) => 18,
            Error::Io(_) => 19,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
