use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters or inconsistent inputs supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A constructed object failed one of its own consistency checks.
    #[error("construction error: {0}")]
    Construction(String),
    /// API used against its contract (e.g. mismatched noise records).
    #[error("misuse: {0}")]
    Misuse(String),
    /// Iteration did not converge.
    #[error("no convergence after {iterations} iterations (gap {gap:e})")]
    Convergence { iterations: usize, gap: f64 },
    /// Non-finite values, failed factorizations and similar faults.
    #[error("numerical fault: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by the numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Domain(_) | Error::Misuse(_) | Error::Io(_) | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
