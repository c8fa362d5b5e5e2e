use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A value violated a documented precondition (non-finite input, bad
    /// parameter, time regression, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Least-squares regressor lost rank. Holds the indices of the columns
    /// that are linearly dependent on earlier ones.
    #[error("least squares: regressor matrix is rank deficient in columns {columns:?}")]
    RankDeficient { columns: Vec<usize> },

    #[error("identification failed: {0}")]
    Identification(String),

    /// Output data has zero variance so the normalized fit is undefined.
    #[error("fit metric undefined: output data is constant")]
    UndefinedFit,

    #[error("kalman filter: innovation covariance is singular ({0})")]
    SingularInnovation(String),

    #[error("kalman filter failed at step {step}: {source}")]
    FilterStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("plant diverged at t = {time} s")]
    Diverged { time: f64 },

    #[error("empty window: {0}")]
    EmptyWindow(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
