use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{op}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        op: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("{op}: non-finite entry encountered")]
    NonFinite { op: &'static str },

    #[error(
        "{op}: matrix is rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})"
    )]
    RankDeficient {
        op: &'static str,
        sigma_min: f64,
        sigma_max: f64,
    },

    #[error("{op}: zero matrix has no defined {what}")]
    ZeroMatrix {
        op: &'static str,
        what: &'static str,
    },

    #[error("matrix is not on the Stiefel manifold: ||X^T X - I||_F = {residual:e} > {tol:e}")]
    NotFeasible { residual: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("run diverged at iteration {iter}: loss = {loss:e}")]
    Diverged { iter: u64, loss: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(
        op: &'static str,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.into(),
            found: found.into(),
        }
    }
}
