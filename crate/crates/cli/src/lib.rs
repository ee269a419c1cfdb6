//! File formats, experiment runner and command-line front end for
//! [`capforge_core`].
//!
//! Input is one CSV per battery (`cycle,capacity_ah`, file stem = battery id).
//! Outputs are plot-ready CSV and JSON: `report.json` (deterministic metrics),
//! `timing.json`, `manifest.json`, `pred_<id>.csv`, `loss_<id>.csv` and JSON
//! model checkpoints.

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod csv_io;
pub mod error;
pub mod manifest;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
