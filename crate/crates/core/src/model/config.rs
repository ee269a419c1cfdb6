use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden width of the baseline networks.
pub const BASELINE_WIDTH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Multi-scale layers of patch-based MLP experts.
    #[default]
    Mspmlp,
    /// Feed-forward stack `w → 64 → 64 → 64 → 1`.
    Dnn,
    /// Same mixture-of-experts scaffolding with plain `w → 64 → w` experts.
    PlainMoe,
}

impl Architecture {
    pub fn label(self) -> &'static str {
        match self {
            Architecture::Mspmlp => "mspmlp",
            Architecture::Dnn => "dnn",
            Architecture::PlainMoe => "moe",
        }
    }

    pub fn uses_experts(self) -> bool {
        !matches!(self, Architecture::Dnn)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mspmlp" => Ok(Architecture::Mspmlp),
            "dnn" => Ok(Architecture::Dnn),
            "moe" | "plain_moe" | "plain-moe" => Ok(Architecture::PlainMoe),
            other => Err(Error::Config(format!("unknown architecture {other:?} (expected mspmlp, dnn or moe)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Observation window length `w`.
    pub window: usize,
    /// Number of cascaded multi-scale layers `m`.
    pub num_layers: usize,
    /// Experts per layer `n`.
    pub experts_per_layer: usize,
    /// Experts activated per sample `k`.
    pub active_experts: usize,
    /// One list of `n` patch sizes per layer.
    pub patch_sizes: Vec<Vec<usize>>,
    pub intra_depth: usize,
    pub inter_depth: usize,
    pub intra_width: usize,
    pub inter_width: usize,
    pub enable_intra: bool,
    pub enable_inter: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            architecture: Architecture::Mspmlp,
            window: 36,
            num_layers: 2,
            experts_per_layer: 4,
            active_experts: 3,
            patch_sizes: vec![vec![18, 12, 9, 6], vec![6, 4, 3, 2]],
            intra_depth: 2,
            inter_depth: 2,
            intra_width: 64,
            inter_width: 64,
            enable_intra: true,
            enable_inter: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::Config(msg));
        if self.window < 2 {
            return bad(format!("window must be at least 2, got {}", self.window));
        }
        if !self.architecture.uses_experts() {
            return Ok(());
        }
        if self.num_layers == 0 {
            return bad("at least one multi-scale layer is required".into());
        }
        if self.experts_per_layer == 0 {
            return bad("at least one expert per layer is required".into());
        }
        if self.active_experts == 0 || self.active_experts > self.experts_per_layer {
            return bad(format!(
                "active experts k={} must lie in [1, {}]",
                self.active_experts, self.experts_per_layer
            ));
        }
        if self.architecture == Architecture::PlainMoe {
            return Ok(());
        }
        if !self.enable_intra && !self.enable_inter {
            return bad("intra-patch and inter-patch paths cannot both be disabled".into());
        }
        if self.intra_depth == 0 || self.inter_depth == 0 || self.intra_width == 0 || self.inter_width == 0 {
            return bad("MLP depths and widths must be positive".into());
        }
        if self.patch_sizes.len() != self.num_layers {
            return bad(format!(
                "expected patch sizes for {} layers, got {}",
                self.num_layers,
                self.patch_sizes.len()
            ));
        }
        for (layer, sizes) in self.patch_sizes.iter().enumerate() {
            if sizes.len() != self.experts_per_layer {
                return bad(format!(
                    "layer {layer} lists {} patch sizes for {} experts",
                    sizes.len(),
                    self.experts_per_layer
                ));
            }
            for &p in sizes {
                if p == 0 || !self.window.is_multiple_of(p) {
                    return bad(format!("patch size {p} does not divide window length {}", self.window));
                }
            }
        }
        Ok(())
    }
}
