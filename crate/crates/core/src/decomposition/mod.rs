//! Readout range/null-space decomposition, the α/β gradient projector, the
//! three-layer error projection, displacement diagnostics and the case
//! classifier.
//!
//! Convention: activations are row vectors and projectors act on the right
//! (`Δh·P`); hidden-layer gradients are `h × x`, so the projector acts on the
//! left (`A·ΔW_H`). Both are the same statement since `A` is symmetric.

mod cases;
mod displacement;
mod projection;
mod readout;
mod three_layer;

pub use cases::{classify_case, CaseInputs, CaseLabel, CaseThresholds, PlasticityCase, StabilityCase};
pub use displacement::{displacement, isotropic_ratio, quantile, DisplacementRecord, NormSummary};
pub use projection::{project_hidden_gradient, ProjectionSpec};
pub use readout::{readout_decomposition, stacked_decomposition, ReadoutDecomposition};
pub use three_layer::{three_layer_error_projection, ErrorProjection, ErrorProjector};

use thiserror::Error;

use crate::linalg::LinalgError;
use crate::model::ModelError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecompositionError {
    #[error("dimension error: {0}")]
    Dims(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("classification unavailable: {0}")]
    Unavailable(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
