use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{relu, relu_backward, Linear, Matrix};
use crate::error::{Error, Result};

/// Stack of linear layers with ReLU between consecutive layers (none after the last).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Activations kept by [`Mlp::forward_cached`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    pre_activations: Vec<Matrix>,
}

impl MlpCache {
    pub(crate) fn push_pattern(&self, out: &mut Vec<bool>) {
        for z in &self.pre_activations {
            out.extend(z.as_slice().iter().map(|&v| v > 0.0));
        }
    }
}

impl Mlp {
    /// `dims = [d_0, d_1, ..., d_L]` builds `L` linear layers `d_{i} → d_{i+1}`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(alloc::format!("invalid MLP dims {dims:?}")));
        }
        let layers = dims.windows(2).map(|d| Linear::new(d[0], d[1], rng)).collect();
        Ok(Mlp { layers })
    }

    /// Hidden layers `width`, `depth` linear layers in total, mapping `d → d`.
    pub fn square<R: Rng + ?Sized>(d: usize, width: usize, depth: usize, rng: &mut R) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Config("MLP depth must be at least 1".into()));
        }
        let mut dims = alloc::vec![d];
        dims.extend(core::iter::repeat_n(width, depth - 1));
        dims.push(d);
        Mlp::new(&dims, rng)
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in()
    }

    pub fn d_out(&self) -> usize {
        self.layers[self.layers.len() - 1].d_out()
    }

    pub fn forward(&self, input: &Matrix) -> Result<Matrix> {
        let mut x = self.layers[0].forward(input)?;
        for layer in &self.layers[1..] {
            x = layer.forward(&relu(&x))?;
        }
        Ok(x)
    }

    pub fn forward_cached(&self, input: &Matrix) -> Result<(Matrix, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len() - 1);
        let mut x = input.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&x)?;
            inputs.push(x);
            if i + 1 == self.layers.len() {
                return Ok((z, MlpCache { inputs, pre_activations }));
            }
            x = relu(&z);
            pre_activations.push(z);
        }
        unreachable!("an Mlp has at least one layer")
    }

    pub fn backward(&mut self, cache: &MlpCache, grad_out: &Matrix) -> Result<Matrix> {
        let mut grad = grad_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i + 1 < self.layers.len() {
                grad = relu_backward(&cache.pre_activations[i], &grad)?;
            }
            grad = self.layers[i].backward(&cache.inputs[i], &grad)?;
        }
        Ok(grad)
    }
}
