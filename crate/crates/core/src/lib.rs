//! Readout range/null-space decomposition of activation change (RDAC) for
//! task-incremental learning in linear networks.
//!
//! The crate trains bias-free linear networks on split-MNIST, decomposes the
//! change of prior-task hidden activations into the range and null space of
//! the frozen prior readouts, and constrains learning with the projector
//! `A = α·CCᵀ + β·NNᵀ` or an EWC penalty.

pub mod data;
pub mod decomposition;
pub mod ewc;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod rng;
mod util;

pub use util::write_atomic;
