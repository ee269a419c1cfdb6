use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sqrt, Matrix, Parameter};
use crate::error::{Error, Result};

/// `input · weight + bias`, broadcasting the bias over rows.
pub fn linear_forward(input: &Matrix, weight: &Matrix, bias: &[f64]) -> Result<Matrix> {
    if bias.len() != weight.cols() {
        return Err(Error::dims("linear bias", weight.shape(), (1, bias.len())));
    }
    let mut out = input.matmul(weight)?;
    for r in 0..out.rows() {
        for (o, b) in out.row_mut(r).iter_mut().zip(bias) {
            *o += b;
        }
    }
    Ok(out)
}

/// Fully connected layer. `weight` is `d_in × d_out`, `bias` is `1 × d_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Linear {
    /// Uniform initialization in `±sqrt(1/d_in)` for both weight and bias.
    pub fn new<R: Rng + ?Sized>(d_in: usize, d_out: usize, rng: &mut R) -> Self {
        let bound = sqrt(1.0 / d_in as f64);
        let mut weight = Matrix::zeros(d_in, d_out);
        weight
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-bound..bound));
        let mut bias = Matrix::zeros(1, d_out);
        bias.as_mut_slice()
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-bound..bound));
        Linear {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
        }
    }

    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        Linear {
            weight: Parameter::new(Matrix::zeros(d_in, d_out)),
            bias: Parameter::new(Matrix::zeros(1, d_out)),
        }
    }

    pub fn d_in(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn d_out(&self) -> usize {
        self.weight.value.cols()
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        linear_forward(input, &self.weight.value, self.bias.value.as_slice())
    }

    /// Accumulates `dW += xᵀ·dY`, `db += Σ_rows dY` and returns `dX = dY·Wᵀ`.
    pub fn backward(&mut self, input: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        if grad_out.rows() != input.rows() || grad_out.cols() != self.d_out() {
            return Err(Error::dims("linear backward", input.shape(), grad_out.shape()));
        }
        let dw = input.t_matmul(grad_out)?;
        self.weight.grad.add_assign(&dw)?;
        let db = self.bias.grad.as_mut_slice();
        for r in 0..grad_out.rows() {
            for (b, g) in db.iter_mut().zip(grad_out.row(r)) {
                *b += g;
            }
        }
        grad_out.matmul_t(&self.weight.value)
    }
}
