//! A small reverse-mode automatic differentiation engine over dense `f64`
//! tensors, with the operator set, optimizer, schedule and checkpoint format
//! the Transformer needs.

mod checkpoint;
mod gradcheck;
mod graph;
mod optim;
mod params;

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointEntry};
pub use gradcheck::{grad_check, grad_check_all, grad_check_scaled, GradCheckReport, OpKind, FD_EPS, GRAD_TOL};
pub use graph::{Gradients, Graph, Var};
pub use optim::{adam_step, lr_at, AdamConfig, AdamState, ScheduleCfg};
pub use params::{ParamId, ParamStore};

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {shapes}")]
    Shape { op: &'static str, shapes: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient for parameter {param} (first bad value {value})")]
    NonFinite { param: String, value: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(op: &'static str, shapes: &[&[usize]]) -> TensorError {
    let shapes = shapes.iter().map(|s| format!("{s:?}")).collect::<Vec<_>>().join(" and ");
    TensorError::Shape { op, shapes }
}

/// Row-major dense tensor.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.iter().any(|&d| d == 0) || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::Shape { op: "tensor", shapes: format!("{shape:?} with {} values", data.len()) });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: vec![1], data: vec![v] }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Tensor { shape: vec![data.len()], data }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    /// Row `i` of a 2-D tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = *self.shape.last().unwrap();
        &self.data[i * cols..(i + 1) * cols]
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}
