use alloc::format;
use alloc::vec::Vec;

use super::{exp, sqrt, Matrix};
use crate::error::{Error, Result};

pub fn relu(input: &Matrix) -> Matrix {
    input.map(|x| if x > 0.0 { x } else { 0.0 })
}

/// Gradient of [`relu`] given the pre-activation it was applied to.
/// The derivative at exactly zero is taken as zero.
pub fn relu_backward(pre_activation: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
    if pre_activation.shape() != grad_out.shape() {
        return Err(Error::dims("relu_backward", pre_activation.shape(), grad_out.shape()));
    }
    let mut out = grad_out.clone();
    for (g, &z) in out.as_mut_slice().iter_mut().zip(pre_activation.as_slice()) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(out)
}

/// Numerically stable softmax of one row of logits.
pub fn softmax_row(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Empty("logit vector"));
    }
    if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("softmax logit {bad}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| exp(z - max)).collect();
    let sum: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= sum);
    Ok(out)
}

fn check_pair(predicted: &[f64], actual: &[f64]) -> Result<()> {
    if predicted.len() != actual.len() {
        return Err(Error::dims("metric", (predicted.len(), 1), (actual.len(), 1)));
    }
    if predicted.is_empty() {
        return Err(Error::Empty("prediction set"));
    }
    Ok(())
}

/// Mean absolute error.
pub fn mae(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    let total: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p).abs()).sum();
    Ok(total / predicted.len() as f64)
}

/// Root mean squared error.
pub fn rmse(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(predicted, actual)?;
    let total: f64 = predicted.iter().zip(actual).map(|(p, a)| (a - p) * (a - p)).sum();
    Ok(sqrt(total / predicted.len() as f64))
}
