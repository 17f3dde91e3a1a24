use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1} columns")]
    DimensionMismatch(usize, usize),

    #[error("{what} needs at least {need} observations per group, got {got}")]
    TooFewObservations {
        what: &'static str,
        need: usize,
        got: usize,
    },

    #[error("invalid data matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("sign vector lengths ({0}, {1}) do not match gram dimensions ({2}, {3})")]
    SignLengthMismatch(usize, usize, usize, usize),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("csv error at line {line}: {reason}")]
    Csv { line: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::param("alpha", format!("{alpha} is not in (0, 1)")))
    }
}

pub(crate) fn check_resamples(b: usize) -> Result<()> {
    if b == 0 {
        Err(Error::param("b", "number of resamples must be at least 1"))
    } else {
        Ok(())
    }
}
