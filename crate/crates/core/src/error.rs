use thiserror::Error;

/// Errors raised by kernel evaluation, sampling, quadrature and the
/// verification suite.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// Evaluation at a point where the kernel is singular.
    #[error("singular kernel: {0}")]
    Singular(String),
    /// Malformed or inconsistent input (grids, paths, configs).
    #[error("invalid input: {0}")]
    Input(String),
    /// A numerical procedure failed to reach its accuracy contract.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Input(msg.into()))
}

pub(crate) fn numerical<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Numerical(msg.into()))
}

impl Clone for Error {
    fn clone(&self) -> Self {
        match self {
            Self::Domain(m) => Self::Domain(m.clone()),
            Self::Singular(m) => Self::Singular(m.clone()),
            Self::Input(m) => Self::Input(m.clone()),
            Self::Numerical(m) => Self::Numerical(m.clone()),
            Self::Io(e) => Self::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}
