//! Dense linear algebra: a row-major `f64` matrix, products, Jacobi SVD and
//! orthonormal null-space bases.

mod matrix;
mod svd;

pub use matrix::{dot, gemm, gemm_nt, gemm_tn, norm, Matrix};
pub use svd::{null_space_basis, orthonormal_complement, row_space_basis, svd, Svd, DEFAULT_RANK_TOL, MAX_SWEEPS};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not match {rows}x{cols}")]
    Length { rows: usize, cols: usize, len: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("empty matrix")]
    Empty,
    #[error("rank tolerance must be positive and finite, got {0}")]
    Tolerance(f64),
    #[error("jacobi svd did not converge after {sweeps} sweeps (off-diagonal residual {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },
}
