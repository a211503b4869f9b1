use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum Error {
    /// Argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An integrand returned a non-finite value; the location is reported.
    #[error("non-finite integrand sample at {location}: {detail}")]
    NonFinite { location: String, detail: String },

    /// Adaptive integration ran out of budget; the best estimate is attached.
    #[error("tolerance {requested:.3e} not reached (achieved {achieved:.3e}), estimate {estimate:.6e}")]
    Tolerance {
        requested: f64,
        achieved: f64,
        estimate: f64,
    },

    /// Series assembly detected an inconsistent denominator.
    #[error("series assembly inconsistent: {0}")]
    Series(String),

    /// Configuration file or schema problem.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Process exit code per the command-line contract:
    /// 2 for config errors, 3 for internal numeric aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 2,
            _ => 3,
        }
    }
}
