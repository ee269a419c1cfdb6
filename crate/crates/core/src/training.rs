//! Seeded training, evaluation and the leave-one-battery-out experiment
//! protocol (multi-trial averaging, k sweeps, intra/inter ablations).
//!
//! Experiments are expressed as a [`Study`]: a list of [`Cell`]s (a label, a
//! held-out battery and a model configuration), each run for
//! `TrainSettings::trials` independent seeds. Jobs are independent, so callers
//! with threads can run [`Study::run_job`] concurrently and hand the results to
//! [`Study::collect`]; [`Study::run`] does the same sequentially.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{loocv_split, to_batch, CapacitySeries, WindowSample};
use crate::error::{Error, Result};
use crate::model::{mae_loss, Forecaster, ModelConfig};
use crate::nn::{adam_step, mae, rmse, sqrt, OptimizerSettings};

/// Monotonic seconds source. The core has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that never advances; timings come out as zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSettings,
    pub base_seed: u64,
    pub trials: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 100,
            batch_size: 32,
            optimizer: OptimizerSettings::default(),
            base_seed: 0,
            trials: 5,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.trials == 0 {
            return Err(Error::Config(format!(
                "epochs ({}), batch size ({}) and trials ({}) must all be at least 1",
                self.epochs, self.batch_size, self.trials
            )));
        }
        self.optimizer.validate()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Forecaster,
    pub trace: Vec<EpochLoss>,
}

// Blown-up weights surface as non-finite gate logits inside the forward pass.
fn diverged(e: Error, epoch: usize) -> Error {
    match e {
        Error::NonFinite(_) => Error::Diverged { epoch, loss: f64::NAN },
        other => other,
    }
}

/// Trains a fresh model initialized from `seed` with MAE loss and Adam.
///
/// The same seeded generator drives initialization and the per-epoch shuffle.
/// `test`, when given, is only evaluated for the loss trace.
pub fn train_model(
    config: &ModelConfig,
    settings: &TrainSettings,
    train: &[WindowSample],
    test: Option<&[WindowSample]>,
    seed: u64,
) -> Result<TrainedModel> {
    settings.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut config = config.clone();
    config.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Forecaster::with_rng(config, &mut rng)?;
    let test_batch = test.filter(|t| !t.is_empty()).map(to_batch).transpose()?;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut trace = Vec::with_capacity(settings.epochs);
    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(settings.batch_size) {
            let (batch, targets) = to_batch(chunk.iter().map(|&i| &train[i]))?;
            model.zero_grad();
            let (preds, cache) = model.forward_train(&batch).map_err(|e| diverged(e, epoch))?;
            let (loss, grad) = mae_loss(&preds, &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, loss });
            }
            model.backward(&cache, &grad)?;
            for (name, p) in model.named_parameters_mut() {
                adam_step(p, &settings.optimizer)
                    .map_err(|_| Error::NonFinite(format!("gradient of {name} at epoch {epoch}")))?;
            }
            total += loss * chunk.len() as f64;
        }
        let train_loss = total / train.len() as f64;
        let finite = model.named_parameters().iter().all(|(_, p)| p.value.is_finite());
        if !train_loss.is_finite() || !finite {
            return Err(Error::Diverged { epoch, loss: train_loss });
        }
        let test_loss = match &test_batch {
            Some((batch, targets)) => Some(mae(&model.predict(batch).map_err(|e| diverged(e, epoch))?, targets)?),
            None => None,
        };
        trace.push(EpochLoss { epoch, train_loss, test_loss });
    }
    Ok(TrainedModel { model, trace })
}

/// One-step-ahead predictions over a test series and their errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub target_cycles: Vec<u32>,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
    pub mae: f64,
    pub rmse: f64,
    pub inference_seconds_per_window: f64,
}

/// Predicts every test window on its own (true observed history) and scores
/// the predictions.
pub fn evaluate(model: &Forecaster, test: &[WindowSample], clock: &dyn Clock) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let start = clock.now();
    let predicted = test
        .iter()
        .map(|s| model.predict_one(&s.window))
        .collect::<Result<Vec<_>>>()?;
    let elapsed = clock.now() - start;
    let actual: Vec<f64> = test.iter().map(|s| s.target).collect();
    Ok(Evaluation {
        target_cycles: test.iter().map(|s| s.target_cycle).collect(),
        mae: mae(&predicted, &actual)?,
        rmse: rmse(&predicted, &actual)?,
        actual,
        predicted,
        inference_seconds_per_window: elapsed / test.len() as f64,
    })
}

/// Per-battery `k` overrides, e.g. `B0018 → 1`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KOverrides(pub Vec<(String, usize)>);

impl KOverrides {
    /// `k = 1` for B0018, the battery with the largest regeneration jumps.
    pub fn standard() -> Self {
        KOverrides(vec![("B0018".into(), 1)])
    }

    pub fn get(&self, battery_id: &str) -> Option<usize> {
        self.0.iter().rev().find(|(id, _)| id == battery_id).map(|&(_, k)| k)
    }

    /// `base` with this battery's override applied (experts architectures only).
    pub fn config_for(&self, base: &ModelConfig, battery_id: &str) -> ModelConfig {
        let mut c = base.clone();
        if let Some(k) = self.get(battery_id) {
            if c.architecture.uses_experts() {
                c.active_experts = k;
            }
        }
        c
    }
}

/// One row of an experiment: a labelled configuration tested on one battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub test_id: String,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Job {
    pub cell: usize,
    pub trial: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub job: Job,
    pub trained: TrainedModel,
    pub evaluation: Evaluation,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub seed: u64,
    pub mae: f64,
    pub rmse: f64,
    pub final_train_loss: f64,
    pub train_seconds: f64,
    pub inference_seconds_per_window: f64,
}

/// Trial-averaged errors for one battery under one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub battery_id: String,
    pub active_experts: usize,
    /// Mean over trials.
    pub mae: f64,
    pub rmse: f64,
    /// Sample standard deviation over trials (zero for a single trial).
    pub mae_std: f64,
    pub rmse_std: f64,
    pub num_predictions: usize,
    pub trials: Vec<TrialMetrics>,
    pub train_seconds: f64,
    pub inference_seconds_per_window: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    pub report: MetricsReport,
    pub target_cycles: Vec<u32>,
    pub actual: Vec<f64>,
    /// Trial-mean prediction per test window.
    pub predicted: Vec<f64>,
    pub traces: Vec<Vec<EpochLoss>>,
    /// Model of the first trial.
    pub model: Forecaster,
}

/// Average over batteries of the per-battery trial means, per label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub label: String,
    pub average_mae: f64,
    pub average_rmse: f64,
    pub batteries: Vec<MetricsReport>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var))
}

pub struct Study<'a> {
    series: &'a [CapacitySeries],
    settings: TrainSettings,
    cells: Vec<Cell>,
}

impl<'a> Study<'a> {
    pub fn new(series: &'a [CapacitySeries], settings: TrainSettings, cells: Vec<Cell>) -> Result<Self> {
        settings.validate()?;
        if series.len() < 2 {
            return Err(Error::Config(format!(
                "leave-one-out needs at least two batteries, got {}",
                series.len()
            )));
        }
        if cells.is_empty() {
            return Err(Error::Empty("experiment"));
        }
        for cell in &cells {
            cell.config.validate()?;
            // surfaces unknown ids and short series before any training starts
            loocv_split(series, &cell.test_id, cell.config.window)?;
        }
        Ok(Study { series, settings, cells })
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    /// Cell-major, trial-minor. Trial `t` uses seed `base_seed + t` in every cell.
    pub fn jobs(&self) -> Vec<Job> {
        (0..self.cells.len())
            .flat_map(|cell| {
                (0..self.settings.trials).map(move |trial| Job {
                    cell,
                    trial,
                    seed: self.settings.trial_seed(trial),
                })
            })
            .collect()
    }

    pub fn run_job(&self, job: Job, clock: &dyn Clock) -> Result<TrialRun> {
        let cell = self
            .cells
            .get(job.cell)
            .ok_or_else(|| Error::Internal(format!("no cell {}", job.cell)))?;
        let split = loocv_split(self.series, &cell.test_id, cell.config.window)?;
        let start = clock.now();
        let trained = train_model(&cell.config, &self.settings, &split.train, Some(&split.test), job.seed)?;
        let train_seconds = clock.now() - start;
        let evaluation = evaluate(&trained.model, &split.test, clock)?;
        Ok(TrialRun { job, trained, evaluation, train_seconds })
    }

    /// Aggregates finished jobs (any order) into one result per cell.
    pub fn collect(&self, mut runs: Vec<TrialRun>) -> Result<Vec<CellResult>> {
        runs.sort_by_key(|r| (r.job.cell, r.job.trial));
        let expected = self.jobs();
        if runs.len() != expected.len() || runs.iter().zip(&expected).any(|(r, j)| r.job != *j) {
            return Err(Error::Internal("finished jobs do not match the study plan".into()));
        }
        let trials = self.settings.trials;
        let mut results = Vec::with_capacity(self.cells.len());
        let mut runs = runs.into_iter();
        for cell in &self.cells {
            let group: Vec<TrialRun> = runs.by_ref().take(trials).collect();
            results.push(Self::aggregate(cell, group));
        }
        Ok(results)
    }

    fn aggregate(cell: &Cell, group: Vec<TrialRun>) -> CellResult {
        let maes: Vec<f64> = group.iter().map(|r| r.evaluation.mae).collect();
        let rmses: Vec<f64> = group.iter().map(|r| r.evaluation.rmse).collect();
        let (mae, mae_std) = mean_std(&maes);
        let (rmse, rmse_std) = mean_std(&rmses);
        let n = group.len() as f64;
        let first = &group[0].evaluation;
        let mut predicted = vec![0.0; first.predicted.len()];
        for r in &group {
            for (p, v) in predicted.iter_mut().zip(&r.evaluation.predicted) {
                *p += v;
            }
        }
        predicted.iter_mut().for_each(|p| *p /= n);
        let trials: Vec<TrialMetrics> = group
            .iter()
            .map(|r| TrialMetrics {
                trial: r.job.trial,
                seed: r.job.seed,
                mae: r.evaluation.mae,
                rmse: r.evaluation.rmse,
                final_train_loss: r.trained.trace.last().map_or(f64::NAN, |e| e.train_loss),
                train_seconds: r.train_seconds,
                inference_seconds_per_window: r.evaluation.inference_seconds_per_window,
            })
            .collect();
        let report = MetricsReport {
            label: cell.label.clone(),
            battery_id: cell.test_id.clone(),
            active_experts: cell.config.active_experts,
            mae,
            rmse,
            mae_std,
            rmse_std,
            num_predictions: first.predicted.len(),
            train_seconds: trials.iter().map(|t| t.train_seconds).sum::<f64>() / n,
            inference_seconds_per_window: trials.iter().map(|t| t.inference_seconds_per_window).sum::<f64>() / n,
            trials,
        };
        let target_cycles = first.target_cycles.clone();
        let actual = first.actual.clone();
        let mut group = group.into_iter();
        let head = group.next().expect("at least one trial per cell");
        let mut traces = vec![head.trained.trace];
        traces.extend(group.map(|r| r.trained.trace));
        CellResult {
            cell: cell.clone(),
            report,
            target_cycles,
            actual,
            predicted,
            traces,
            model: head.trained.model,
        }
    }

    pub fn run(&self, clock: &dyn Clock) -> Result<Vec<CellResult>> {
        let runs = self
            .jobs()
            .into_iter()
            .map(|job| self.run_job(job, clock))
            .collect::<Result<Vec<_>>>()?;
        self.collect(runs)
    }
}

/// Groups cell results by label, in order of first appearance.
pub fn summarize(results: &[CellResult]) -> Vec<Summary> {
    let mut out: Vec<Summary> = Vec::new();
    for r in results {
        match out.iter_mut().find(|s| s.label == r.cell.label) {
            Some(s) => s.batteries.push(r.report.clone()),
            None => out.push(Summary {
                label: r.cell.label.clone(),
                average_mae: 0.0,
                average_rmse: 0.0,
                batteries: vec![r.report.clone()],
            }),
        }
    }
    for s in &mut out {
        let n = s.batteries.len() as f64;
        s.average_mae = s.batteries.iter().map(|b| b.mae).sum::<f64>() / n;
        s.average_rmse = s.batteries.iter().map(|b| b.rmse).sum::<f64>() / n;
    }
    out
}

/// One cell per battery, each holding that battery out.
pub fn loocv_cells(config: &ModelConfig, overrides: &KOverrides, series: &[CapacitySeries], label: &str) -> Vec<Cell> {
    series
        .iter()
        .map(|s| Cell {
            label: label.into(),
            test_id: s.battery_id().into(),
            config: overrides.config_for(config, s.battery_id()),
        })
        .collect()
}

/// One cell per `k`, all testing on `test_id`.
pub fn sweep_k_cells(config: &ModelConfig, test_id: &str, ks: &[usize]) -> Result<Vec<Cell>> {
    if ks.is_empty() {
        return Err(Error::Empty("k list"));
    }
    ks.iter()
        .map(|&k| {
            let mut c = config.clone();
            c.active_experts = k;
            c.validate()?;
            Ok(Cell {
                label: format!("k={k}"),
                test_id: test_id.into(),
                config: c,
            })
        })
        .collect()
}

pub const ABLATION_LABELS: [&str; 3] = ["full", "no_intra", "no_inter"];

/// Full model, intra-patch path removed, inter-patch path removed; every battery.
pub fn ablation_cells(config: &ModelConfig, overrides: &KOverrides, series: &[CapacitySeries]) -> Result<Vec<Cell>> {
    let mut cells = Vec::new();
    for (label, intra, inter) in [("full", true, true), ("no_intra", false, true), ("no_inter", true, false)] {
        let variant = ModelConfig {
            enable_intra: config.enable_intra && intra,
            enable_inter: config.enable_inter && inter,
            ..config.clone()
        };
        variant.validate()?;
        cells.extend(loocv_cells(&variant, overrides, series, label));
    }
    Ok(cells)
}

/// Leave-one-out over every battery; returns per-battery results and the
/// grand average.
pub fn run_loocv(
    config: &ModelConfig,
    overrides: &KOverrides,
    settings: &TrainSettings,
    series: &[CapacitySeries],
    clock: &dyn Clock,
) -> Result<(Vec<CellResult>, Summary)> {
    let label = config.architecture.label();
    let study = Study::new(series, *settings, loocv_cells(config, overrides, series, label))?;
    let results = study.run(clock)?;
    let summary = summarize(&results).remove(0);
    Ok((results, summary))
}

/// Same split and seeds for every `k`, so only `k` varies.
pub fn sweep_k(
    config: &ModelConfig,
    settings: &TrainSettings,
    series: &[CapacitySeries],
    test_id: &str,
    ks: &[usize],
    clock: &dyn Clock,
) -> Result<Vec<MetricsReport>> {
    let study = Study::new(series, *settings, sweep_k_cells(config, test_id, ks)?)?;
    Ok(study.run(clock)?.into_iter().map(|r| r.report).collect())
}

/// Matched-seed leave-one-out runs for the full model and both single-path variants.
pub fn run_ablation(
    config: &ModelConfig,
    overrides: &KOverrides,
    settings: &TrainSettings,
    series: &[CapacitySeries],
    clock: &dyn Clock,
) -> Result<Vec<Summary>> {
    let study = Study::new(series, *settings, ablation_cells(config, overrides, series)?)?;
    Ok(summarize(&study.run(clock)?))
}
