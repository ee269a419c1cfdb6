//! `report.json` and `timing.json`.
//!
//! The report holds only quantities that are a pure function of data, flags
//! and seeds, so two single-threaded runs write identical bytes. Wall-clock
//! numbers live in the timing file.

use std::path::Path;

use capforge_core::training::{MetricsReport, Summary};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEntry {
    pub trial: usize,
    pub seed: u64,
    pub mae: f64,
    pub rmse: f64,
    pub final_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub battery_id: String,
    pub active_experts: usize,
    pub mae: f64,
    pub rmse: f64,
    pub mae_std: f64,
    pub rmse_std: f64,
    pub num_predictions: usize,
    pub trials: Vec<TrialEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub label: String,
    pub average_mae: f64,
    pub average_rmse: f64,
    pub batteries: Vec<BatteryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub sections: Vec<Section>,
}

impl From<&MetricsReport> for BatteryEntry {
    fn from(m: &MetricsReport) -> Self {
        BatteryEntry {
            battery_id: m.battery_id.clone(),
            active_experts: m.active_experts,
            mae: m.mae,
            rmse: m.rmse,
            mae_std: m.mae_std,
            rmse_std: m.rmse_std,
            num_predictions: m.num_predictions,
            trials: m
                .trials
                .iter()
                .map(|t| TrialEntry {
                    trial: t.trial,
                    seed: t.seed,
                    mae: t.mae,
                    rmse: t.rmse,
                    final_train_loss: t.final_train_loss,
                })
                .collect(),
        }
    }
}

impl From<&Summary> for Section {
    fn from(s: &Summary) -> Self {
        Section {
            label: s.label.clone(),
            average_mae: s.average_mae,
            average_rmse: s.average_rmse,
            batteries: s.batteries.iter().map(BatteryEntry::from).collect(),
        }
    }
}

impl Report {
    pub fn new(command: &str, summaries: &[Summary]) -> Self {
        Report { command: command.into(), sections: summaries.iter().map(Section::from).collect() }
    }

    pub fn section(&self, label: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.label == label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub label: String,
    pub battery_id: String,
    /// Mean over trials.
    pub train_seconds: f64,
    pub inference_seconds_per_window: f64,
}

pub fn timings(summaries: &[Summary]) -> Vec<TimingEntry> {
    summaries
        .iter()
        .flat_map(|s| {
            s.batteries.iter().map(|b| TimingEntry {
                label: s.label.clone(),
                battery_id: b.battery_id.clone(),
                train_seconds: b.train_seconds,
                inference_seconds_per_window: b.inference_seconds_per_window,
            })
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: impl AsRef<Path>) -> Result<Report> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.into(), line: e.line() as u64, message: e.to_string() })
}
