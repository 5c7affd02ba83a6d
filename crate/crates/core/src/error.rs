use thiserror::Error;

/// Errors raised by the solvers and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input violates a documented precondition of the model.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An exponential argument left the representable range.
    #[error("value out of range: {0}")]
    Range(String),

    /// An iterative method failed to converge.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// Integration collapsed the step size; `state` is the last accepted state.
    #[error("step size collapsed at t = {t}: h = {h:e}")]
    StepCollapse { t: f64, h: f64, state: Vec<f64> },

    /// A time step produced non-positive concentrations.
    #[error("negative concentration at t = {t} (node {node}); reduce dt below {dt}")]
    Stability { t: f64, node: usize, dt: f64 },

    /// A computation was called on an input that does not satisfy its precondition.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A regression could not be carried out on the supplied series.
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parameter(msg.into()))
}
