//! Bias-free linear networks with a shared backbone and one readout per task.
//!
//! Activations are row vectors: a batch of inputs is `b × x`, hidden
//! activations are `inputs · W_Hᵀ` and logits are `hidden · W_Rᵀ`.

mod linear;
mod loss;
mod three_layer;

pub use linear::{grads_linear, hidden_gradient, LinearDims, LinearGrads, LinearNet};
pub use loss::{accuracy, argmax_rows, softmax_ce, softmax_rows};
pub use three_layer::{grads_three_layer, ThreeLayerDims, ThreeLayerGrads, ThreeLayerNet};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::linalg::{gemm_nt, LinalgError, Matrix};
use crate::rng::{uniform, PortableRng};

/// Default learning rate of the linear split-MNIST protocol.
pub const DEFAULT_LR: f64 = 5e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("no readout for task {0}")]
    UnknownTask(usize),
    #[error("readout for task {0} is frozen and cannot receive a gradient")]
    FrozenReadout(usize),
    #[error("label {label} outside the {classes} outputs of this readout")]
    Label { label: usize, classes: usize },
    #[error("invalid dimensions: {0}")]
    Dims(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A mini-batch for one task; `labels` are task-local class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub task_id: usize,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>, task_id: usize) -> Result<Self, ModelError> {
        if labels.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        if inputs.rows() != labels.len() {
            return Err(ModelError::Dims(format!(
                "{} input rows for {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        Ok(Self {
            inputs,
            labels,
            task_id,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    /// Pre-readout activations, `b × h`.
    pub hidden: Matrix,
    /// Readout outputs before the softmax, `b × o`.
    pub logits: Matrix,
}

/// Shared behaviour of the one- and three-hidden-layer networks.
pub trait TaskNetwork {
    /// Pre-readout activations for a batch of inputs.
    fn hidden(&self, inputs: &Matrix) -> Result<Matrix, ModelError>;

    fn readouts(&self) -> &Readouts;

    fn readouts_mut(&mut self) -> &mut Readouts;

    fn forward(&self, inputs: &Matrix, task_id: usize) -> Result<Forward, ModelError> {
        let w_r = self.readouts().get(task_id)?;
        let hidden = self.hidden(inputs)?;
        let logits = gemm_nt(&hidden, w_r)?;
        Ok(Forward { hidden, logits })
    }

    fn readout(&self, task_id: usize) -> Result<&Matrix, ModelError> {
        self.readouts().get(task_id)
    }

    fn num_tasks(&self) -> usize {
        self.readouts().len()
    }

    fn freeze(&mut self, task_id: usize) -> Result<(), ModelError> {
        self.readouts_mut().freeze(task_id)
    }

    fn is_frozen(&self, task_id: usize) -> bool {
        self.readouts().is_frozen(task_id)
    }
}

/// Per-task readouts `W_{R^k}` with their freeze flags; task ids start at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Readouts {
    mats: Vec<Matrix>,
    frozen: BTreeSet<usize>,
}

impl Readouts {
    pub fn new(mats: Vec<Matrix>) -> Self {
        Self {
            mats,
            frozen: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    pub fn get(&self, task_id: usize) -> Result<&Matrix, ModelError> {
        task_id
            .checked_sub(1)
            .and_then(|k| self.mats.get(k))
            .ok_or(ModelError::UnknownTask(task_id))
    }

    /// Mutable access to an unfrozen readout.
    pub fn get_mut(&mut self, task_id: usize) -> Result<&mut Matrix, ModelError> {
        if self.frozen.contains(&task_id) {
            return Err(ModelError::FrozenReadout(task_id));
        }
        task_id
            .checked_sub(1)
            .and_then(|k| self.mats.get_mut(k))
            .ok_or(ModelError::UnknownTask(task_id))
    }

    pub fn freeze(&mut self, task_id: usize) -> Result<(), ModelError> {
        self.get(task_id)?;
        self.frozen.insert(task_id);
        Ok(())
    }

    pub fn is_frozen(&self, task_id: usize) -> bool {
        self.frozen.contains(&task_id)
    }

    pub fn frozen(&self) -> impl Iterator<Item = usize> + '_ {
        self.frozen.iter().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Matrix> {
        self.mats.iter()
    }
}

/// Weights drawn from `U[−1/√fan_in, 1/√fan_in]`.
pub(crate) fn init_uniform(rows: usize, fan_in: usize, rng: &mut PortableRng) -> Matrix {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Matrix::from_fn(rows, fan_in, |_, _| uniform(rng, -bound, bound))
}

pub(crate) fn check_dims(name: &str, dims: &[usize]) -> Result<(), ModelError> {
    if dims.contains(&0) {
        return Err(ModelError::Dims(format!(
            "{name} dimensions must be positive, got {dims:?}"
        )));
    }
    Ok(())
}
