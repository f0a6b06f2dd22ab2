use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("fields live on different grids ({left} vs {right} points)")]
    GridMismatch { left: usize, right: usize },

    #[error("target field has zero norm; reject it at generation time")]
    ZeroDenominator,

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("basis column {column} has norm {norm:e}")]
    DegenerateBasis { column: usize, norm: f64 },

    #[error("eigen solver failed: {0}")]
    SolverFailure(String),

    #[error("grid is not a uniform periodic grid")]
    NonUniformGrid,

    #[error("gram matrix condition number {condition:e} exceeds limit")]
    IllConditionedGram { condition: f64 },

    #[error("power iteration stalled after {iterations} iterations (relative change {change:e})")]
    PowerIterationStall { iterations: usize, change: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
