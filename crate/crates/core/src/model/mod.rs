//! The forecaster: per-window instance normalization, a cascade of multi-scale
//! mixture-of-experts layers whose experts are patch-based MLP blocks, a linear
//! head and denormalization. Two baselines (a deep MLP and a mixture of plain
//! MLP experts) share the same normalization wrapper.

mod config;
mod forecaster;
mod gate;
mod moe;
mod norm;
mod objective;
mod params;
mod patch;

pub use config::{Architecture, ModelConfig, BASELINE_WIDTH};
pub use forecaster::{mae_loss, ForwardCache, Forecaster};
pub use gate::{gate, select_top_k, GateDecision};
pub use moe::{combine, dispatch, Dispatch, Expert, MoeLayer, MoeLayerCache, Route};
pub use norm::{denormalize, normalize_window, NormStats, STD_FLOOR};
pub use objective::{gradcheck_config, run_gradcheck, synthetic_batch, BatchObjective};
pub use patch::{
    inter_patch_forward, intra_patch_forward, patch_block_forward, patchify, unpatchify, PatchBlock,
    PatchBlockCache, PatchGrid,
};
