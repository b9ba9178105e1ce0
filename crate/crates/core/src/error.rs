use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The Dirichlet-reduced system matrix is numerically singular at the
    /// requested frequency.
    #[error("omega = {omega} rad/s is at or near a resonance (reciprocal condition estimate {rcond:.3e})")]
    Resonance { omega: f64, rcond: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
