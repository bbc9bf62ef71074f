use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval [{lo}, {hi}]: {reason}")]
    InvalidInterval {
        lo: f64,
        hi: f64,
        reason: &'static str,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("interval [{lo}, {hi}] escapes the domain [{domain_lo}, {domain_hi}]")]
    OutOfDomain {
        lo: f64,
        hi: f64,
        domain_lo: f64,
        domain_hi: f64,
    },

    #[error("played point {rho} is not inside the feedback set [{lo}, {hi}]")]
    PointNotInSet { rho: f64, lo: f64, hi: f64 },

    #[error("loss {0} is outside [0, 1]; rescale the environment first")]
    LossOutOfRange(f64),

    #[error("feedback set [{lo}, {hi}] has zero probability under the current weights")]
    ZeroProbability { lo: f64, hi: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
