use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Parameter;
use crate::error::{Error, Result};

/// A scalar loss over a set of named parameters, with analytic gradients.
pub trait Objective {
    /// Loss at the current parameter values together with the discrete state of
    /// the forward pass (ReLU masks, routing decisions, sign of residuals).
    /// Finite differences are only meaningful when this pattern does not change.
    fn loss(&self) -> Result<(f64, Vec<bool>)>;

    /// Clears and fills every parameter gradient; returns the loss.
    fn compute_gradients(&mut self) -> Result<f64>;

    fn visit_parameters(&mut self, f: &mut dyn FnMut(&str, &mut Parameter));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckSettings {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error.
    pub tolerance: f64,
    /// Denominator floor for the relative error, so gradients that are zero on
    /// both sides compare by absolute error instead.
    pub magnitude_floor: f64,
    /// Probe only this many randomly chosen elements; `None` probes all.
    pub max_probes: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckSettings {
    fn default() -> Self {
        GradCheckSettings {
            step: 1e-5,
            tolerance: 1e-4,
            magnitude_floor: 1e-6,
            max_probes: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
    /// The perturbation crossed a non-differentiable point.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub probes: Vec<Probe>,
}

impl GradCheckReport {
    pub fn checked(&self) -> impl Iterator<Item = &Probe> {
        self.probes.iter().filter(|p| !p.skipped)
    }

    pub fn skipped(&self) -> usize {
        self.probes.iter().filter(|p| p.skipped).count()
    }

    pub fn max_relative_error(&self) -> f64 {
        self.checked().map(|p| p.relative_error).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> Vec<&Probe> {
        // NaN errors count as failures
        self.checked()
            .filter(|p| p.relative_error.partial_cmp(&self.tolerance) != Some(Ordering::Less))
            .collect()
    }

    /// Passes when every differentiable probe is within tolerance and at least
    /// nine in ten probes were differentiable.
    pub fn passed(&self) -> bool {
        let checked = self.checked().count();
        checked > 0 && self.failures().is_empty() && self.skipped() * 10 <= self.probes.len()
    }
}

fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Element `index` across the concatenation of all parameters, in visiting order.
fn with_element<O: Objective + ?Sized>(objective: &mut O, index: usize, f: &mut dyn FnMut(&mut f64)) {
    let mut offset = 0;
    let mut done = false;
    objective.visit_parameters(&mut |_, p| {
        if done {
            return;
        }
        let len = p.len();
        if index < offset + len {
            f(&mut p.value.as_mut_slice()[index - offset]);
            done = true;
        }
        offset += len;
    });
}

/// Compares analytic gradients against central finite differences.
pub fn check_gradients<O: Objective + ?Sized>(
    objective: &mut O,
    settings: &GradCheckSettings,
) -> Result<GradCheckReport> {
    objective.compute_gradients()?;

    // (name, element index within the parameter, analytic gradient)
    let mut elements: Vec<(String, usize, f64)> = Vec::new();
    let mut non_finite = None;
    objective.visit_parameters(&mut |name, p| {
        for (i, &g) in p.grad.as_slice().iter().enumerate() {
            if !g.is_finite() && non_finite.is_none() {
                non_finite = Some(alloc::format!("gradient of {name}[{i}]"));
            }
            elements.push((name.to_string(), i, g));
        }
    });
    if let Some(what) = non_finite {
        return Err(Error::NonFinite(what));
    }
    if elements.is_empty() {
        return Err(Error::Empty("parameter set"));
    }

    let chosen: Vec<usize> = match settings.max_probes {
        Some(n) if n < elements.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
            let mut idx = sample(&mut rng, elements.len(), n).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..elements.len()).collect(),
    };

    let (_, base_pattern) = objective.loss()?;
    let h = settings.step;
    let mut probes = Vec::with_capacity(chosen.len());
    for flat in chosen {
        let mut original = 0.0;
        with_element(objective, flat, &mut |x| {
            original = *x;
            *x = original + h;
        });
        let (plus, plus_pattern) = objective.loss()?;
        with_element(objective, flat, &mut |x| *x = original - h);
        let (minus, minus_pattern) = objective.loss()?;
        with_element(objective, flat, &mut |x| *x = original);

        let numeric = (plus - minus) / (2.0 * h);
        let (name, index, analytic) = &elements[flat];
        probes.push(Probe {
            parameter: name.clone(),
            index: *index,
            analytic: *analytic,
            numeric,
            relative_error: relative_error(*analytic, numeric, settings.magnitude_floor),
            skipped: plus_pattern != base_pattern || minus_pattern != base_pattern,
        });
    }
    Ok(GradCheckReport {
        tolerance: settings.tolerance,
        probes,
    })
}
