use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    /// Cholesky breakdown, or a Gram matrix that cannot have full rank.
    #[error("matrix is singular or not positive definite at pivot {pivot}")]
    Singular { pivot: usize },

    #[error("insufficient data: need at least {required} time steps, got {got}")]
    InsufficientData { required: usize, got: usize },

    #[error("estimated noise variance {0:e} is not positive")]
    DegenerateVariance(f64),

    #[error(
        "coordinate descent did not converge at lambda={lambda:e} (max KKT violation {gap:e})"
    )]
    Convergence { lambda: f64, gap: f64 },

    #[error("Jacobi eigensolver did not converge after {0} sweeps")]
    EigenNoConvergence(usize),

    #[error("oracle matrix of order {size} exceeds the limit of {limit}")]
    OracleScale { size: usize, limit: usize },

    #[error("no trajectory length up to {cap} met the error threshold")]
    CapExceeded { cap: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
