use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("site {site} at ({row}, {col}): neighbourhood window crosses the lattice border")]
    OutOfBounds { site: usize, row: usize, col: usize },

    #[error("constraint violated: {0}")]
    ConstraintViolation(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(
        "coordinate descent did not converge after {sweeps} sweeps \
         (lambda = {lambda:.3e}, max change = {max_change:.3e}, kkt residual = {kkt:.3e})"
    )]
    Convergence {
        lambda: f64,
        sweeps: usize,
        max_change: f64,
        kkt: f64,
        last_iterate: Vec<f64>,
    },

    #[error("numerical failure: {reason} (residual = {residual:.3e}, max row sum = {max_row_sum:.4})")]
    Numerical {
        reason: String,
        residual: f64,
        max_row_sum: f64,
    },

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn data(line: usize, msg: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: msg.into(),
        }
    }

    /// True for errors caused by bad configuration rather than data or numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::ConstraintViolation(_)
                | Error::OutOfBounds { .. }
                | Error::Capability(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
