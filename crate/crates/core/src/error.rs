use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("mean spin direction undefined (|<S>| = {0:e})")]
    DegenerateDirection(f64),

    #[error("readout correction refused for qubit {qubit}: F0 + F1 = {sum} <= 1")]
    SingularConfusion { qubit: usize, sum: f64 },

    #[error("crosstalk matrix too ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code class used by the command line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) => 2,
            Error::Capacity(_) => 3,
            Error::Numerical(_)
            | Error::DegenerateDirection(_)
            | Error::SingularConfusion { .. }
            | Error::IllConditioned(_) => 4,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => 1,
        }
    }
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
