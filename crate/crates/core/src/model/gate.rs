use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_row, Linear, Matrix};

/// Experts chosen for one sample, strongest first, with weights renormalized
/// over the chosen set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
}

impl GateDecision {
    /// Weight assigned to `expert`, zero when it was not selected.
    pub fn weight_of(&self, expert: usize) -> f64 {
        self.selected
            .iter()
            .position(|&e| e == expert)
            .map_or(0.0, |i| self.weights[i])
    }
}

/// Keeps the `k` most probable experts (ties go to the lower index) and
/// rescales their probabilities to sum to one.
pub fn select_top_k(probabilities: &[f64], k: usize) -> Result<GateDecision> {
    let n = probabilities.len();
    if k == 0 || k > n {
        return Err(Error::Config(format!("k={k} outside [1, {n}]")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort: equal probabilities keep ascending index order
    order.sort_by(|&a, &b| {
        probabilities[b]
            .partial_cmp(&probabilities[a])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    order.truncate(k);
    let total: f64 = order.iter().map(|&e| probabilities[e]).sum();
    let weights = order.iter().map(|&e| probabilities[e] / total).collect();
    Ok(GateDecision { selected: order, weights })
}

/// Gating network on one window: a linear layer to `n` logits, softmax, top-k.
pub fn gate(window: &[f64], gating: &Linear, k: usize) -> Result<GateDecision> {
    let x = Matrix::from_vec(1, window.len(), window.to_vec())?;
    let logits = gating.forward(&x)?;
    select_top_k(&softmax_row(logits.row(0))?, k)
}

/// Gradient of the loss with respect to the `n` logits of one sample, given the
/// gradient with respect to its selected weights. Unselected logits get zero:
/// the renormalized weights are a softmax over the selected logits only.
pub(crate) fn logit_gradient(decision: &GateDecision, weight_grads: &[f64], out: &mut [f64]) {
    let mean: f64 = decision.weights.iter().zip(weight_grads).map(|(g, d)| g * d).sum();
    for ((&e, &g), &d) in decision.selected.iter().zip(&decision.weights).zip(weight_grads) {
        out[e] = g * (d - mean);
    }
}
