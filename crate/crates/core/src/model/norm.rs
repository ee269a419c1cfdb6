use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::nn::sqrt;

/// Lower bound on the standard deviation used for scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// Mean and (population) standard deviation of one input window, in Ah.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

/// Standardizes a window by its own mean and standard deviation.
pub fn normalize_window(window: &[f64]) -> (Vec<f64>, NormStats) {
    let first = window.first().copied().unwrap_or(0.0);
    if window.iter().all(|&x| x == first) {
        let stats = NormStats { mean: first, std: STD_FLOOR };
        return (alloc::vec![0.0; window.len()], stats);
    }
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let var = window.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = sqrt(var).max(STD_FLOOR);
    let normalized = window.iter().map(|x| (x - mean) / std).collect();
    (normalized, NormStats { mean, std })
}

pub fn denormalize(value: f64, stats: NormStats) -> f64 {
    value * stats.std + stats.mean
}
