use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("accounting error: {0}")]
    Accounting(String),
    #[error("spanner build error: {0}")]
    Build(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("certificate error: {0}")]
    Certificate(String),
    #[error("size guard: {0}")]
    Guard(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    /// True for memory or budget violations of the simulated cluster.
    pub fn is_accounting(&self) -> bool {
        matches!(self, Error::Accounting(_))
    }

    pub fn is_solver(&self) -> bool {
        matches!(self, Error::Solver(_))
    }
}
