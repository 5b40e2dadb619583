use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A structural assumption on the coefficients does not hold.
    #[error("constraint violated: {0}")]
    Constraint(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// Configuration is missing required pieces or mixes incompatible ones.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("time step {dt} exceeds the stability limit; admissible dt <= {admissible}")]
    Cfl { dt: f64, admissible: f64 },

    /// An iterative method did not reach its tolerance, or a trajectory left
    /// its admissible region.
    #[error("numerical failure: {what} (residual {residual:e})")]
    Numerical { what: String, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn numerical(what: impl Into<String>, residual: f64) -> Self {
        Error::Numerical {
            what: what.into(),
            residual,
        }
    }
}
