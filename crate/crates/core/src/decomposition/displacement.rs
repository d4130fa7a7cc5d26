use serde::{Deserialize, Serialize};

use crate::linalg::{norm, Matrix};

use super::{DecompositionError, ReadoutDecomposition};

/// Mean and quantiles of per-sample displacement norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub mean: f64,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

impl NormSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            p10: quantile(&sorted, 0.10),
            p50: quantile(&sorted, 0.50),
            p90: quantile(&sorted, 0.90),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Change of prior-task activations split into the readout range and null
/// space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementRecord {
    pub d_range: NormSummary,
    pub d_null: NormSummary,
    pub d_total: NormSummary,
    pub count: usize,
    pub rank: usize,
    pub dim: usize,
}

impl DisplacementRecord {
    /// Mean null-space over mean range displacement.
    pub fn null_range_ratio(&self) -> f64 {
        self.d_null.mean / self.d_range.mean
    }
}

/// Per-sample norms of `Δh·CCᵀ`, `Δh·NNᵀ` and `Δh` for `Δh = after − before`
/// (rows are samples).
pub fn displacement(
    h_before: &Matrix,
    h_after: &Matrix,
    decomp: &ReadoutDecomposition,
) -> Result<DisplacementRecord, DecompositionError> {
    if h_before.shape() != h_after.shape() {
        return Err(DecompositionError::Dims(format!(
            "activation snapshots differ in shape: {:?} vs {:?}",
            h_before.shape(),
            h_after.shape()
        )));
    }
    if h_before.rows() == 0 {
        return Err(DecompositionError::Dims("no samples to measure".into()));
    }
    let delta = h_after.sub(h_before)?;
    let (in_range, in_null) = decomp.split(&delta)?;
    let per_row = |m: &Matrix| (0..m.rows()).map(|i| norm(m.row(i))).collect::<Vec<_>>();
    Ok(DisplacementRecord {
        d_range: NormSummary::from_values(&per_row(&in_range)),
        d_null: NormSummary::from_values(&per_row(&in_null)),
        d_total: NormSummary::from_values(&per_row(&delta)),
        count: delta.rows(),
        rank: decomp.rank,
        dim: decomp.dim(),
    })
}

/// Expected null/range norm ratio `√((dim − rank)/rank)` of an isotropic
/// random displacement.
pub fn isotropic_ratio(rank: usize, dim: usize) -> Result<f64, DecompositionError> {
    if rank == 0 || rank >= dim {
        return Err(DecompositionError::Domain(format!(
            "isotropic ratio needs 0 < rank < dim, got rank {rank}, dim {dim}"
        )));
    }
    Ok(((dim - rank) as f64 / rank as f64).sqrt())
}
