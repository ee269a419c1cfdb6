//! Dense numeric core: matrices, the differentiable building blocks the
//! forecaster is made of, the Adam optimizer and a finite-difference gradient
//! checker.
//!
//! Gradients come from hand-derived backward rules. Every differentiable block
//! has a `forward_cached` that keeps what its backward pass needs and a
//! `backward` that accumulates parameter gradients and returns the gradient
//! with respect to its input.

mod adam;
mod gradcheck;
mod linear;
mod matrix;
mod mlp;
mod ops;
mod param;

pub use adam::{adam_step, OptimizerSettings};
pub use gradcheck::{check_gradients, GradCheckReport, GradCheckSettings, Objective, Probe};
pub use linear::{linear_forward, Linear};
pub use mlp::{Mlp, MlpCache};
pub use matrix::Matrix;
pub use ops::{mae, relu, relu_backward, rmse, softmax_row};
pub use param::Parameter;

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}
