use alloc::format;

use serde::{Deserialize, Serialize};

use super::{sqrt, Parameter};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            learning_rate: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < self.beta2
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// One bias-corrected Adam update; the gradient is cleared afterwards.
///
/// A parameter whose gradient is identically zero (for example an expert no
/// sample was routed to) keeps its value: only its moment estimates decay.
pub fn adam_step(param: &mut Parameter, settings: &OptimizerSettings) -> Result<()> {
    if !param.grad.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    param.step_count += 1;
    let OptimizerSettings { learning_rate, beta1, beta2, epsilon } = *settings;

    if param.grad.as_slice().iter().all(|&g| g == 0.0) {
        param.adam_m.as_mut_slice().iter_mut().for_each(|m| *m *= beta1);
        param.adam_v.as_mut_slice().iter_mut().for_each(|v| *v *= beta2);
        return Ok(());
    }

    let t = param.step_count as f64;
    let correction1 = 1.0 - libm::pow(beta1, t);
    let correction2 = 1.0 - libm::pow(beta2, t);
    let value = param.value.as_mut_slice();
    let m = param.adam_m.as_mut_slice();
    let v = param.adam_v.as_mut_slice();
    for (((x, g), m), v) in value.iter_mut().zip(param.grad.as_mut_slice()).zip(m).zip(v) {
        *m = beta1 * *m + (1.0 - beta1) * *g;
        *v = beta2 * *v + (1.0 - beta2) * *g * *g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *x -= learning_rate * m_hat / (sqrt(v_hat) + epsilon);
        *g = 0.0;
    }
    Ok(())
}
