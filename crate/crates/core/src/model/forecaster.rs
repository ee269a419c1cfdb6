use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::moe::{MoeLayer, MoeLayerCache};
use super::norm::{denormalize, normalize_window, NormStats};
use super::params::Params;
use super::{Architecture, GateDecision, ModelConfig, BASELINE_WIDTH};
use crate::error::{Error, Result};
use crate::nn::{Linear, Matrix, Mlp, MlpCache, Parameter};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)] // one per model
enum Trunk {
    Experts { layers: Vec<MoeLayer>, head: Linear },
    Dense { mlp: Mlp },
}

#[derive(Debug, Clone)]
enum TrunkCache {
    Experts { layers: Vec<MoeLayerCache>, head_input: Matrix },
    Dense(MlpCache),
}

/// Everything [`Forecaster::backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stats: Vec<NormStats>,
    trunk: TrunkCache,
}

impl ForwardCache {
    pub fn stats(&self) -> &[NormStats] {
        &self.stats
    }

    /// Gate decisions of each multi-scale layer (empty for the dense baseline).
    pub fn decisions(&self) -> Vec<&[GateDecision]> {
        match &self.trunk {
            TrunkCache::Experts { layers, .. } => layers.iter().map(|c| c.decisions()).collect(),
            TrunkCache::Dense(_) => Vec::new(),
        }
    }

    /// ReLU masks and routing choices, flattened.
    pub fn activation_pattern(&self, experts_per_layer: usize) -> Vec<bool> {
        let mut out = Vec::new();
        match &self.trunk {
            TrunkCache::Experts { layers, .. } => {
                for c in layers {
                    c.push_pattern(experts_per_layer, &mut out);
                }
            }
            TrunkCache::Dense(c) => c.push_pattern(&mut out),
        }
        out
    }
}

/// One-step-ahead capacity forecaster: normalize the window, run the trunk,
/// map to a scalar and denormalize with the window's own statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Forecaster {
    config: ModelConfig,
    trunk: Trunk,
}

#[derive(Deserialize)]
struct RawForecaster {
    config: ModelConfig,
    trunk: Trunk,
}

impl<'de> Deserialize<'de> for Forecaster {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> core::result::Result<Self, D::Error> {
        let raw = RawForecaster::deserialize(deserializer)?;
        let model = Forecaster {
            config: raw.config,
            trunk: raw.trunk,
        };
        model.validate_structure().map_err(serde::de::Error::custom)?;
        Ok(model)
    }
}

impl Forecaster {
    /// Builds and initializes a model from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, &mut rng)
    }

    pub fn with_rng<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let w = config.window;
        let trunk = match config.architecture {
            Architecture::Dnn => Trunk::Dense {
                mlp: Mlp::new(&[w, BASELINE_WIDTH, BASELINE_WIDTH, BASELINE_WIDTH, 1], rng)?,
            },
            Architecture::Mspmlp | Architecture::PlainMoe => {
                let layers = (0..config.num_layers)
                    .map(|i| MoeLayer::new(&config, i, rng))
                    .collect::<Result<Vec<_>>>()?;
                Trunk::Experts {
                    layers,
                    head: Linear::new(w, 1, rng),
                }
            }
        };
        Ok(Forecaster { config, trunk })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Changes the number of experts activated per sample.
    pub fn set_active_experts(&mut self, k: usize) -> Result<()> {
        let mut config = self.config.clone();
        config.active_experts = k;
        config.validate()?;
        self.config = config;
        Ok(())
    }

    /// Checks that parameter names and shapes are exactly those `config` implies.
    pub fn validate_structure(&self) -> Result<()> {
        self.config.validate()?;
        let mut reference_config = self.config.clone();
        reference_config.seed = 0;
        let reference = Forecaster::new(reference_config)?;
        let ours = self.named_parameters();
        let theirs = reference.named_parameters();
        if ours.len() != theirs.len() {
            return Err(Error::Config(format!(
                "model has {} parameter tensors, configuration implies {}",
                ours.len(),
                theirs.len()
            )));
        }
        for ((na, a), (nb, b)) in ours.iter().zip(&theirs) {
            if na != nb || a.shape() != b.shape() {
                return Err(Error::Config(format!(
                    "parameter {na} {:?} does not match expected {nb} {:?}",
                    a.shape(),
                    b.shape()
                )));
            }
            if !a.value.is_finite() {
                return Err(Error::NonFinite(format!("parameter {na}")));
            }
        }
        Ok(())
    }

    fn normalize(&self, batch: &Matrix) -> Result<(Matrix, Vec<NormStats>)> {
        let w = self.config.window;
        if batch.cols() != w {
            return Err(Error::dims("forecaster input", batch.shape(), (batch.rows(), w)));
        }
        let mut normalized = Matrix::zeros(batch.rows(), w);
        let mut stats = Vec::with_capacity(batch.rows());
        for r in 0..batch.rows() {
            let (x, s) = normalize_window(batch.row(r));
            normalized.row_mut(r).copy_from_slice(&x);
            stats.push(s);
        }
        Ok((normalized, stats))
    }

    /// Predicted next-cycle capacity (Ah) for every window row of `batch`.
    pub fn predict(&self, batch: &Matrix) -> Result<Vec<f64>> {
        let (x, stats) = self.normalize(batch)?;
        let k = self.config.active_experts;
        let out = match &self.trunk {
            Trunk::Experts { layers, head } => {
                let mut h = x;
                for layer in layers {
                    h = layer.forward(&h, k)?;
                }
                head.forward(&h)?
            }
            Trunk::Dense { mlp } => mlp.forward(&x)?,
        };
        Ok(out.as_slice().iter().zip(&stats).map(|(&v, &s)| denormalize(v, s)).collect())
    }

    /// Single-window convenience wrapper around [`Forecaster::predict`].
    pub fn predict_one(&self, window: &[f64]) -> Result<f64> {
        let batch = Matrix::from_vec(1, window.len(), window.to_vec())?;
        Ok(self.predict(&batch)?[0])
    }

    pub fn forward_train(&self, batch: &Matrix) -> Result<(Vec<f64>, ForwardCache)> {
        let (x, stats) = self.normalize(batch)?;
        let k = self.config.active_experts;
        let (out, trunk) = match &self.trunk {
            Trunk::Experts { layers, head } => {
                let mut caches = Vec::with_capacity(layers.len());
                let mut h = x;
                for layer in layers {
                    let (y, c) = layer.forward_cached(&h, k)?;
                    caches.push(c);
                    h = y;
                }
                let out = head.forward(&h)?;
                (out, TrunkCache::Experts { layers: caches, head_input: h })
            }
            Trunk::Dense { mlp } => {
                let (out, c) = mlp.forward_cached(&x)?;
                (out, TrunkCache::Dense(c))
            }
        };
        let preds = out.as_slice().iter().zip(&stats).map(|(&v, &s)| denormalize(v, s)).collect();
        Ok((preds, ForwardCache { stats, trunk }))
    }

    /// Accumulates parameter gradients given `∂loss/∂prediction` per row.
    pub fn backward(&mut self, cache: &ForwardCache, grad_predictions: &[f64]) -> Result<()> {
        if grad_predictions.len() != cache.stats.len() {
            return Err(Error::dims("forecaster backward", (cache.stats.len(), 1), (grad_predictions.len(), 1)));
        }
        // prediction = head_out · std + mean
        let scaled: Vec<f64> = grad_predictions.iter().zip(&cache.stats).map(|(g, s)| g * s.std).collect();
        let d_out = Matrix::from_vec(scaled.len(), 1, scaled)?;
        match (&mut self.trunk, &cache.trunk) {
            (Trunk::Experts { layers, head }, TrunkCache::Experts { layers: caches, head_input }) => {
                let mut grad = head.backward(head_input, &d_out)?;
                for (layer, c) in layers.iter_mut().zip(caches).rev() {
                    grad = layer.backward(c, &grad)?;
                }
            }
            (Trunk::Dense { mlp }, TrunkCache::Dense(c)) => {
                mlp.backward(c, &d_out)?;
            }
            _ => return Err(Error::Internal("forward cache does not match model".into())),
        }
        Ok(())
    }

    /// Gate decisions of each multi-scale layer for every row of `batch`.
    pub fn gate_decisions(&self, batch: &Matrix) -> Result<Vec<Vec<GateDecision>>> {
        let (x, _) = self.normalize(batch)?;
        let k = self.config.active_experts;
        let Trunk::Experts { layers, .. } = &self.trunk else {
            return Ok(Vec::new());
        };
        let mut h = x;
        let mut all = Vec::with_capacity(layers.len());
        for layer in layers {
            all.push(layer.decide(&h, k)?);
            h = layer.forward(&h, k)?;
        }
        Ok(all)
    }

    pub fn layers(&self) -> &[MoeLayer] {
        match &self.trunk {
            Trunk::Experts { layers, .. } => layers,
            Trunk::Dense { .. } => &[],
        }
    }

    pub fn named_parameters(&self) -> Vec<(String, &Parameter)> {
        let mut out = Vec::new();
        match &self.trunk {
            Trunk::Experts { layers, head } => {
                for (i, l) in layers.iter().enumerate() {
                    l.collect(&format!("layers.{i}"), &mut out);
                }
                head.collect("head", &mut out);
            }
            Trunk::Dense { mlp } => mlp.collect("dense", &mut out),
        }
        out
    }

    pub fn named_parameters_mut(&mut self) -> Vec<(String, &mut Parameter)> {
        let mut out = Vec::new();
        match &mut self.trunk {
            Trunk::Experts { layers, head } => {
                for (i, l) in layers.iter_mut().enumerate() {
                    l.collect_mut(&format!("layers.{i}"), &mut out);
                }
                head.collect_mut("head", &mut out);
            }
            Trunk::Dense { mlp } => mlp.collect_mut("dense", &mut out),
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.named_parameters_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named_parameters().iter().map(|(_, p)| p.len()).sum()
    }

    /// FNV-1a over the bit patterns of every parameter value.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (_, p) in self.named_parameters() {
            for v in p.value.as_slice() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    /// Sets every parameter to zero; such a model predicts each window's mean.
    pub fn zero_parameters(&mut self) {
        for (_, p) in self.named_parameters_mut() {
            p.value.fill(0.0);
        }
    }
}

/// Mean absolute error on the batch and its gradient with respect to each
/// prediction (`sign(residual)/B`, zero at an exact hit).
pub fn mae_loss(predictions: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    let loss = crate::nn::mae(predictions, targets)?;
    let b = predictions.len() as f64;
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            if p > t {
                1.0 / b
            } else if p < t {
                -1.0 / b
            } else {
                0.0
            }
        })
        .collect();
    Ok((loss, grad))
}

pub(crate) fn residual_signs(predictions: &[f64], targets: &[f64]) -> Vec<bool> {
    let mut out = vec![false; predictions.len() * 2];
    for (i, (p, t)) in predictions.iter().zip(targets).enumerate() {
        out[2 * i] = p > t;
        out[2 * i + 1] = p < t;
    }
    out
}
