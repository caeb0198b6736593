use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How label probabilities become attention guidance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    /// Four labels; guidance is `1 - P(NA)`.
    #[default]
    Soft,
    /// Four labels; guidance is 0 where `NA` is the argmax and 1 elsewhere.
    OneHot,
    /// `RP`, `NW` and `IN` collapsed into one edit class; guidance is
    /// `P(edit)`.
    Merged,
}

impl LabelMode {
    pub fn num_classes(self) -> usize {
        match self {
            LabelMode::Merged => 2,
            _ => 4,
        }
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(LabelMode::Soft),
            "one-hot" => Ok(LabelMode::OneHot),
            "merged" => Ok(LabelMode::Merged),
            other => Err(Error::Config(format!("unknown label mode `{other}` (soft, one-hot, merged)"))),
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Soft => "soft",
            LabelMode::OneHot => "one-hot",
            LabelMode::Merged => "merged",
        })
    }
}

/// Whether the generation loss backpropagates into the label head through
/// the guidance vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GuidanceGrad {
    #[default]
    Flow,
    Detach,
}

impl FromStr for GuidanceGrad {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flow" => Ok(GuidanceGrad::Flow),
            "detach" => Ok(GuidanceGrad::Detach),
            other => Err(Error::Config(format!("unknown guidance gradient mode `{other}` (flow, detach)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Graph convolution layers; 0 disables the graph branch.
    pub rgcn_layers: usize,
    /// Filled in from the vocabulary when the model is built.
    pub vocab_size: usize,
    /// Longest source stream and longest target (including `</s>`).
    pub max_len: usize,
    pub tau_d: f64,
    pub label_mode: LabelMode,
    pub guidance_grad: GuidanceGrad,
    pub dropout: f64,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            ffn_dim: 128,
            rgcn_layers: 2,
            vocab_size: 0,
            max_len: 128,
            tau_d: 1.0,
            label_mode: LabelMode::Soft,
            guidance_grad: GuidanceGrad::Flow,
            dropout: 0.0,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// A very small configuration for gradient checks and smoke tests.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 8,
            enc_layers: 1,
            dec_layers: 1,
            heads: 2,
            ffn_dim: 12,
            rgcn_layers: 1,
            max_len: 32,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return fail(format!("d_model {} must be a positive multiple of heads {}", self.d_model, self.heads));
        }
        if self.ffn_dim == 0 || self.max_len == 0 {
            return fail("ffn_dim and max_len must be positive".into());
        }
        if !(self.tau_d > 0.0) {
            return fail(format!("tau_d must be positive, got {}", self.tau_d));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}
