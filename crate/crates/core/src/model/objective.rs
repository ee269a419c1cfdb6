use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forecaster::{mae_loss, residual_signs};
use super::{Forecaster, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::{check_gradients, GradCheckReport, GradCheckSettings, Matrix, Objective, Parameter};

/// Training loss (MAE on denormalized predictions) of a model on one batch.
pub struct BatchObjective<'a> {
    pub model: &'a mut Forecaster,
    pub batch: Matrix,
    pub targets: Vec<f64>,
}

impl Objective for BatchObjective<'_> {
    fn loss(&self) -> Result<(f64, Vec<bool>)> {
        let (preds, cache) = self.model.forward_train(&self.batch)?;
        let (loss, _) = mae_loss(&preds, &self.targets)?;
        let mut pattern = cache.activation_pattern(self.model.config().experts_per_layer);
        pattern.extend(residual_signs(&preds, &self.targets));
        Ok((loss, pattern))
    }

    fn compute_gradients(&mut self) -> Result<f64> {
        self.model.zero_grad();
        let (preds, cache) = self.model.forward_train(&self.batch)?;
        let (loss, grad) = mae_loss(&preds, &self.targets)?;
        self.model.backward(&cache, &grad)?;
        for (name, p) in self.model.named_parameters() {
            if !p.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        Ok(loss)
    }

    fn visit_parameters(&mut self, f: &mut dyn FnMut(&str, &mut Parameter)) {
        for (name, p) in self.model.named_parameters_mut() {
            f(&name, p);
        }
    }
}

/// Small configuration used by the gradient self-check: `w=12`, one layer of
/// two experts with patch sizes 6 and 4, both active.
pub fn gradcheck_config(seed: u64) -> ModelConfig {
    ModelConfig {
        window: 12,
        num_layers: 1,
        experts_per_layer: 2,
        active_experts: 2,
        patch_sizes: vec![vec![6, 4]],
        seed,
        ..ModelConfig::default()
    }
}

/// Random decaying capacity-like windows and next-step targets.
pub fn synthetic_batch(rows: usize, window: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut batch = Matrix::zeros(rows, window);
    let mut targets = Vec::with_capacity(rows);
    for r in 0..rows {
        let start = rng.gen_range(1.3..2.0);
        let slope = rng.gen_range(0.001..0.01);
        let mut c = start;
        for v in batch.row_mut(r) {
            c -= slope + rng.gen_range(-0.01..0.01);
            *v = c;
        }
        targets.push(c - slope + rng.gen_range(-0.02..0.02));
    }
    (batch, targets)
}

/// Central-difference check of every parameter of the [`gradcheck_config`] model.
pub fn run_gradcheck(seed: u64, settings: &GradCheckSettings) -> Result<GradCheckReport> {
    let mut model = Forecaster::new(gradcheck_config(seed))?;
    let (batch, targets) = synthetic_batch(4, 12, seed);
    let mut objective = BatchObjective { model: &mut model, batch, targets };
    check_gradients(&mut objective, settings)
}
