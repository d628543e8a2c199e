//! Reverse-mode automatic differentiation over small dense `f32` tensors.
//!
//! The [`Tape`] records every operation of a forward pass as a node; calling
//! [`Tape::backward`] replays the nodes in reverse and accumulates gradients
//! for every named parameter that participated. Operations are tensor-level
//! (whole affine maps, whole activations), so a tape for one episode holds a
//! few dozen nodes rather than one node per scalar.
//!
//! Two properties matter everywhere downstream and are worth calling out:
//!
//! - **Multiple roots.** `backward` accepts a list of `(scalar node, seed)`
//!   pairs. Score-function gradients need this: the reconstruction loss is
//!   seeded with `1.0` while every action log-probability is seeded with its
//!   own weight, and a single sweep merges both flows where they meet.
//! - **Determinism.** All reductions accumulate in `f64` in a fixed order, so
//!   the same tape and parameters give bit-identical values and gradients on
//!   every run of the same binary.
//!
//! Parameters live in a [`ParamStore`] outside the tape; a tape node refers
//! to a parameter by name and reads its values from the store both during
//! recording and during `backward`. The store must therefore not be mutated
//! between the forward pass and the backward pass of one tape.

mod checkpoint;
mod gradcheck;
mod optim;
mod store;
mod tape;

pub use checkpoint::{load_param_store, param_store_from_bytes, param_store_to_bytes,
                     save_param_store, CheckpointError};
pub use gradcheck::{grad_check, grad_check_coords, sample_coords, GradCheckReport, ParamCoord};
pub use optim::sgd_step;
pub use store::{Gradients, ParamStore};
pub use tape::{categorical_sample, lstm_step, Activation, Tape, TapeError, ValueId};

/// A dense tensor of `f32` values with an explicit shape.
///
/// Data is stored flat in row-major order. Most of the crate works with
/// rank-1 and rank-2 tensors; the shape is kept as a vector so checkpoints
/// can round-trip whatever rank they were given.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorValue {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl TensorValue {
    /// Builds a tensor, checking that `data` fills `shape` exactly.
    ///
    /// # Panics
    ///
    /// Panics if the number of elements implied by `shape` differs from
    /// `data.len()`. Shapes are chosen by the caller, so a mismatch is a
    /// programming error rather than a recoverable condition.
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Self {
        let expected: usize = shape.iter().product();
        assert_eq!(
            expected,
            data.len(),
            "shape {shape:?} needs {expected} values, got {}",
            data.len()
        );
        Self { shape, data }
    }

    /// A tensor of zeros.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![0.0; len] }
    }

    /// A rank-1 tensor wrapping `data`.
    pub fn vector(data: Vec<f32>) -> Self {
        let len = data.len();
        Self { shape: vec![len], data }
    }

    /// A single-element tensor holding `value`.
    pub fn scalar(value: f32) -> Self {
        Self { shape: vec![1], data: vec![value] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// The value of a single-element tensor.
    ///
    /// # Panics
    ///
    /// Panics if the tensor holds more than one element.
    pub fn item(&self) -> f32 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }
}
