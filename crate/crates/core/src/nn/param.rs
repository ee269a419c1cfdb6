use serde::{Deserialize, Serialize};

use super::Matrix;

/// A trainable matrix together with its gradient accumulator and Adam state.
///
/// Only the value is serialized; gradient and optimizer moments restart at zero
/// after a checkpoint is loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Matrix", into = "Matrix")]
pub struct Parameter {
    pub value: Matrix,
    pub grad: Matrix,
    pub(crate) adam_m: Matrix,
    pub(crate) adam_v: Matrix,
    pub(crate) step_count: u64,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Parameter {
            value,
            grad: Matrix::zeros(r, c),
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn len(&self) -> usize {
        self.value.as_slice().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.adam_m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.adam_v
    }
}

impl From<Matrix> for Parameter {
    fn from(value: Matrix) -> Self {
        Parameter::new(value)
    }
}

impl From<Parameter> for Matrix {
    fn from(p: Parameter) -> Self {
        p.value
    }
}
