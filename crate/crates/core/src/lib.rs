//! Multi-scale battery capacity forecasting with patch-based MLP experts
//! routed by a top-k mixture-of-experts gate.
//!
//! The crate is `no_std` (with `alloc`). Everything here is pure computation:
//! dense matrices and hand-derived backward rules, the forecaster and its two
//! baselines, sliding-window datasets with leave-one-out splits, and the seeded
//! training/evaluation protocol. File IO, wall clocks and the command line live
//! in the `capforge` crate.
//!
//! ```
//! use capforge_core::model::{Forecaster, ModelConfig};
//! use capforge_core::nn::Matrix;
//!
//! let model = Forecaster::new(ModelConfig::default()).unwrap();
//! let window: Vec<f64> = (0..36).map(|t| 1.85 - 0.002 * t as f64).collect();
//! let batch = Matrix::from_vec(1, 36, window).unwrap();
//! let prediction = model.predict(&batch).unwrap();
//! assert_eq!(prediction.len(), 1);
//! ```

#![no_std]

extern crate alloc;

pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
