use std::time::Instant;

use capforge_core::model::Forecaster;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub iterations: usize,
    pub warmup: usize,
    pub mean_seconds: f64,
    pub p95_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub warnings: Vec<String>,
}

pub const RECOMMENDED_ITERATIONS: usize = 1000;

/// A smooth declining window, the shape the model sees in practice.
pub fn probe_window(w: usize) -> Vec<f64> {
    (0..w).map(|i| 1.85 - 0.003 * i as f64 + 0.002 * (i as f64 * 0.7).sin()).collect()
}

/// Times single-window predictions, one call per sample.
pub fn bench_latency(model: &Forecaster, iterations: usize, warmup: usize) -> capforge_core::Result<LatencyReport> {
    if iterations == 0 {
        return Err(capforge_core::Error::Config("iterations must be at least 1".into()));
    }
    let window = probe_window(model.config().window);
    let mut sink = 0.0;
    for _ in 0..warmup {
        sink += model.predict_one(&window)?;
    }
    let mut samples = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let start = Instant::now();
        sink += std::hint::black_box(model.predict_one(std::hint::black_box(&window))?);
        samples.push(start.elapsed().as_secs_f64());
    }
    std::hint::black_box(sink);

    let mut warnings = Vec::new();
    if iterations == 1 {
        warnings.push("degenerate sample: a single iteration gives no spread; p95 equals the only sample".into());
    } else if iterations < RECOMMENDED_ITERATIONS {
        warnings.push(format!("only {iterations} iterations; at least {RECOMMENDED_ITERATIONS} are recommended"));
    }
    Ok(summarize(samples, warmup, warnings))
}

fn summarize(mut samples: Vec<f64>, warmup: usize, warnings: Vec<String>) -> LatencyReport {
    samples.sort_by(f64::total_cmp);
    let n = samples.len();
    // nearest-rank percentile
    let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
    LatencyReport {
        iterations: n,
        warmup,
        mean_seconds: samples.iter().sum::<f64>() / n as f64,
        p95_seconds: samples[rank - 1],
        min_seconds: samples[0],
        max_seconds: samples[n - 1],
        warnings,
    }
}
