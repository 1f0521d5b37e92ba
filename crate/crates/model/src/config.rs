//! Model hyperparameters and their derived quantities.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sgh_core::filter::SUPPORTED_CHEBYSHEV_ORDERS;

use crate::error::{config, Result};
use crate::losses::loss_registry;
use crate::template::template_registry;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Camera views `N`.
    pub views: usize,
    /// Mesh clusters `K`.
    pub clusters: usize,
    /// Region feature width `C`.
    pub channels: usize,
    /// Transformer tokens `V'` over both hands.
    pub tokens: usize,
    /// Encoder blocks; a width-halving layer sits between consecutive blocks.
    pub n_layers: usize,
    pub layers_per_block: usize,
    pub heads: usize,
    /// Hidden width of the feed-forward sublayer as a multiple of the block width.
    pub ffn_multiplier: usize,
    /// Per-hand decoder level sizes, coarsest first; the last is the template size.
    pub decoder_sizes: Vec<usize>,
    pub cheb_order: usize,
    /// Weight per loss name; zero disables a term.
    pub loss_weights: BTreeMap<String, f64>,
    pub seed: u64,
    /// Name in the template registry.
    pub template: String,
    /// Channels of the synthetic backbone output.
    pub backbone_channels: usize,
    /// Spatial side of the backbone output.
    pub feature_size: usize,
    pub learning_rate: f64,
}

pub fn default_loss_weights() -> BTreeMap<String, f64> {
    [("mesh", 1.0), ("reproj2d", 1.0), ("edge", 1.0), ("mse", 0.0), ("chamfer", 0.0)]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// `⌈w / 2⌉`
pub fn halve(w: usize) -> usize {
    w.div_ceil(2)
}

impl ModelConfig {
    /// Full-size two-hand configuration with the 4023-vertex template.
    pub fn paper() -> Self {
        Self {
            views: 2,
            clusters: 7,
            channels: 256,
            tokens: 804,
            n_layers: 3,
            layers_per_block: 4,
            heads: 3,
            ffn_multiplier: 2,
            decoder_sizes: vec![617, 1234, 2468, 4023],
            cheb_order: 3,
            loss_weights: default_loss_weights(),
            seed: 0,
            template: "hand".into(),
            backbone_channels: 2048,
            feature_size: 7,
            learning_rate: 1e-4,
        }
    }

    /// Desk-scale configuration: 162-vertex icosphere hands, `C = 32`, two blocks.
    pub fn toy() -> Self {
        Self {
            channels: 32,
            tokens: 34,
            n_layers: 2,
            decoder_sizes: vec![41, 81, 162],
            template: "icosphere".into(),
            learning_rate: 1e-3,
            ..Self::paper()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Token width entering each encoder block: `C + 3`, then ceiling halving.
    pub fn block_widths(&self) -> Vec<usize> {
        let mut w = vec![self.channels + 3];
        for _ in 1..self.n_layers {
            w.push(halve(*w.last().expect("non-empty")));
        }
        w
    }

    /// Per-head width for a block of width `w`.
    pub fn head_dim(&self, w: usize) -> usize {
        w.div_ceil(self.heads)
    }

    /// Side of the fused feature map: two rounds of ×2 upsampling and a valid 3×3 conv.
    pub fn fusion_size(&self) -> usize {
        let s1 = 2 * self.feature_size - 2;
        2 * s1 - 2
    }

    pub fn tokens_per_hand(&self) -> usize {
        self.tokens / 2
    }

    pub fn template_vertices(&self) -> usize {
        *self.decoder_sizes.last().expect("validated non-empty")
    }

    pub fn weight(&self, loss: &str) -> f64 {
        self.loss_weights.get(loss).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("views", self.views),
            ("clusters", self.clusters),
            ("channels", self.channels),
            ("n_layers", self.n_layers),
            ("layers_per_block", self.layers_per_block),
            ("heads", self.heads),
            ("ffn_multiplier", self.ffn_multiplier),
            ("backbone_channels", self.backbone_channels),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(config(format!("{name} must be positive")));
        }
        if self.feature_size < 2 {
            return Err(config("feature_size must be at least 2"));
        }
        if self.tokens < 2 || self.tokens % 2 != 0 {
            return Err(config(format!("tokens must be even and >= 2, got {}", self.tokens)));
        }
        if self.decoder_sizes.is_empty() || self.decoder_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(config(format!("decoder_sizes must be strictly ascending, got {:?}", self.decoder_sizes)));
        }
        if self.tokens_per_hand() > self.template_vertices() {
            return Err(config("more tokens per hand than template vertices"));
        }
        if self.clusters > self.template_vertices() {
            return Err(config("more clusters than template vertices"));
        }
        if !SUPPORTED_CHEBYSHEV_ORDERS.contains(&self.cheb_order) {
            return Err(config(format!("unsupported Chebyshev order {}", self.cheb_order)));
        }
        let losses = loss_registry();
        for (name, &w) in &self.loss_weights {
            if !losses.contains(name) {
                return Err(config(format!("unknown loss `{name}`")));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(config(format!("loss weight `{name}` must be finite and non-negative")));
            }
        }
        if !self.loss_weights.values().any(|&w| w > 0.0) {
            return Err(config("at least one loss weight must be positive"));
        }
        if !template_registry().contains(&self.template) {
            return Err(config(format!("unknown template `{}`", self.template)));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(config("learning_rate must be finite and non-negative"));
        }
        Ok(())
    }
}
