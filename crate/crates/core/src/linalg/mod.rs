//! Dense and sparse linear algebra kernels.

mod dense;
mod solve;
mod sparse;
mod svd;

pub use dense::{dot, gemm, norm2, norm_inf, DenseMatrix};
pub use solve::{dense_solve, sparse_cg_solve, sparse_cg_solve_from, tridiagonal_solve, CgOutcome, LuFactors};
pub use sparse::SparseMatrix;
pub use svd::{thin_svd, SvdResult, DEFAULT_RANK_TOL};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinalgError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("matrix is singular to working precision at pivot {pivot}")]
    Singular { pivot: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    IterationLimit { iterations: usize, residual: f64 },
}
