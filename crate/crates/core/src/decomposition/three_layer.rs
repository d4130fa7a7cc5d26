//! Output-error projection for the three-hidden-layer linear network.
//!
//! While training task `new`, every hidden-layer gradient is built from the
//! output error `e` through `e·W_{R^new}`. Transforming `e → e·A` with `A` the
//! projector onto the common null space of
//!
//! ```text
//! M₁ = W_{R^old}·W_{R^new}ᵀ
//! M₂ = W_{R^old}·W_{H3}·W_{H3}ᵀ·W_{R^new}ᵀ
//! M₃ = W_{R^old}·W_{H3}·W_{H2}·W_{H2}ᵀ·W_{H3}ᵀ·W_{R^new}ᵀ
//! ```
//!
//! makes each of the three weight updates invisible to the old readout,
//! including all products of updates, so old-task outputs stay fixed.

use crate::linalg::{gemm, gemm_nt, null_space_basis, Matrix, DEFAULT_RANK_TOL};
use crate::model::{TaskNetwork, ThreeLayerNet};

use super::DecompositionError;

/// The projector `A` (o × o, symmetric) for one `(old, new)` task pair at the
/// current weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProjector {
    pub a: Matrix,
    /// Dimension of the admissible error subspace; `0` means every error is
    /// projected to zero.
    pub admissible_dim: usize,
    pub constraints: [Matrix; 3],
}

impl ErrorProjector {
    pub fn new(net: &ThreeLayerNet, old_task: usize, new_task: usize) -> Result<Self, DecompositionError> {
        let w_old = net.readout(old_task)?;
        let w_new = net.readout(new_task)?;
        let w3 = net.w_h3();
        let w2 = net.w_h2();
        let m1 = gemm_nt(w_old, w_new)?;
        let old3 = gemm(w_old, w3)?;
        let new3 = gemm(w_new, w3)?;
        let m2 = gemm_nt(&old3, &new3)?;
        let m3 = gemm_nt(&gemm(&old3, w2)?, &gemm(&new3, w2)?)?;
        let stacked = Matrix::vstack(&[&m1, &m2, &m3])?;
        let n = null_space_basis(&stacked, DEFAULT_RANK_TOL)?;
        let admissible_dim = n.cols();
        if admissible_dim == 0 {
            log::debug!("no admissible error direction for tasks ({old_task}, {new_task})");
        }
        let a = gemm_nt(&n, &n)?;
        Ok(Self {
            a,
            admissible_dim,
            constraints: [m1, m2, m3],
        })
    }

    /// `e·A` for error rows `e` (b × o).
    pub fn apply(&self, e: &Matrix) -> Result<Matrix, DecompositionError> {
        Ok(gemm(e, &self.a)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProjection {
    pub projected: Matrix,
    pub admissible_dim: usize,
}

/// Projects output-error rows for one update. An empty admissible subspace
/// is reported through `admissible_dim == 0` with a zero result.
pub fn three_layer_error_projection(
    e_rows: &Matrix,
    net: &ThreeLayerNet,
    old_task: usize,
    new_task: usize,
) -> Result<ErrorProjection, DecompositionError> {
    let p = ErrorProjector::new(net, old_task, new_task)?;
    Ok(ErrorProjection {
        projected: p.apply(e_rows)?,
        admissible_dim: p.admissible_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn net_with(w_old: Matrix, w_new: Matrix) -> ThreeLayerNet {
        let h = w_old.cols();
        ThreeLayerNet::from_parts(
            Matrix::identity(h),
            Matrix::identity(h),
            Matrix::identity(h),
            vec![w_old, w_new],
        )
        .unwrap()
    }

    #[test]
    fn orthogonal_readouts_leave_error_unchanged() {
        let w1 = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]]);
        let w2 = Matrix::from_rows(&[[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]);
        let net = net_with(w1, w2);
        let e = Matrix::from_rows(&[[0.3, -0.7], [1.0, 2.0]]);
        let out = three_layer_error_projection(&e, &net, 1, 2).unwrap();
        assert_eq!(out.admissible_dim, 2);
        assert!(out.projected.sub(&e).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn identical_square_readouts_block_everything() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = Matrix::from_rows(&[[s, s], [s, -s]]);
        let net = net_with(w.clone(), w);
        let e = Matrix::from_rows(&[[0.5, -0.5]]);
        let out = three_layer_error_projection(&e, &net, 1, 2).unwrap();
        assert_eq!(out.admissible_dim, 0);
        assert_eq!(out.projected.max_abs(), 0.0);
    }

    #[test]
    fn unknown_task_is_an_error() {
        let net = net_with(Matrix::identity(2), Matrix::identity(2));
        assert!(three_layer_error_projection(&Matrix::zeros(1, 2), &net, 1, 3).is_err());
    }
}
