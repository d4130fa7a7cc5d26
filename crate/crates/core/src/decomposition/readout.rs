use crate::linalg::{gemm, gemm_nt, orthonormal_complement, row_space_basis, LinalgError, Matrix, DEFAULT_RANK_TOL};

use super::DecompositionError;

/// Range/null-space split of the hidden space seen by a readout `W_R`.
///
/// `c` (h × r) is an orthonormal basis of the row space of `W_R`, `n`
/// (h × (h − r)) an orthonormal basis of its null space. Activation rows are
/// split as `Δh = Δh·CCᵀ + Δh·NNᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutDecomposition {
    pub c: Matrix,
    pub n: Matrix,
    pub p_range: Matrix,
    pub p_null: Matrix,
    pub rank: usize,
}

impl ReadoutDecomposition {
    /// Decomposition for a single readout (`o ≤ h`).
    pub fn new(w_r: &Matrix, rel_tol: f64) -> Result<Self, DecompositionError> {
        if w_r.rows() > w_r.cols() {
            return Err(DecompositionError::Dims(format!(
                "readout has {} outputs but reads only {} hidden units",
                w_r.rows(),
                w_r.cols()
            )));
        }
        Self::of_rows(w_r, rel_tol)
    }

    /// Decomposition of the row space of any matrix.
    pub(crate) fn of_rows(m: &Matrix, rel_tol: f64) -> Result<Self, DecompositionError> {
        let c_rows = row_space_basis(m, rel_tol)?;
        let n_cols = orthonormal_complement(&c_rows);
        let c = c_rows.transpose();
        let p_range = gemm_nt(&c, &c)?;
        let p_null = gemm_nt(&n_cols, &n_cols)?;
        Ok(Self {
            rank: c.cols(),
            c,
            n: n_cols,
            p_range,
            p_null,
        })
    }

    pub fn dim(&self) -> usize {
        self.p_range.rows()
    }

    /// Splits activation rows into `(Δh·CCᵀ, Δh·NNᵀ)`.
    pub fn split(&self, rows: &Matrix) -> Result<(Matrix, Matrix), LinalgError> {
        Ok((gemm(rows, &self.p_range)?, gemm(rows, &self.p_null)?))
    }
}

/// [`ReadoutDecomposition::new`] with the default relative rank cutoff.
pub fn readout_decomposition(w_r: &Matrix) -> Result<ReadoutDecomposition, DecompositionError> {
    ReadoutDecomposition::new(w_r, DEFAULT_RANK_TOL)
}

/// Decomposition of several readouts stacked vertically; its null space is
/// the intersection of the individual null spaces.
pub fn stacked_decomposition(readouts: &[&Matrix]) -> Result<ReadoutDecomposition, DecompositionError> {
    if readouts.is_empty() {
        return Err(DecompositionError::Dims("no readouts to stack".into()));
    }
    let stacked = Matrix::vstack(readouts)?;
    if readouts.len() == 1 {
        return ReadoutDecomposition::new(&stacked, DEFAULT_RANK_TOL);
    }
    ReadoutDecomposition::of_rows(&stacked, DEFAULT_RANK_TOL)
}
