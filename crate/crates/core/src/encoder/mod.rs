//! Bidirectional transformer encoder with masked-LM and classification heads.
//!
//! Layers use post-layer-norm residual blocks with GELU feed-forward networks.
//! All gradients are derived by hand in [`model`]; the finite-difference
//! harness in `optim::grad_check` verifies them.

mod attention;
mod checkpoint;
mod model;
mod params;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use attention::attention;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use model::{
    accumulate_classification, accumulate_mlm, classification_loss, classify, classify_batch, forward, mlm_loss,
    mlm_predictions, predicted_label, ForwardOutput,
};
pub use params::{init_params, EncoderParams, LayerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active.
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub hidden_dim: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            n_layers: 2,
            hidden_dim: 64,
            n_heads: 2,
            ffn_dim: 256,
            max_seq_len: 128,
            vocab_size: 2000,
            dropout_rate: 0.1,
        }
    }
}

impl EncoderConfig {
    /// The configuration used for gradient verification.
    pub fn tiny() -> Self {
        EncoderConfig {
            n_layers: 1,
            hidden_dim: 8,
            n_heads: 2,
            ffn_dim: 16,
            max_seq_len: 6,
            vocab_size: 20,
            dropout_rate: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_layers == 0 || self.hidden_dim == 0 || self.n_heads == 0 || self.ffn_dim == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if !self.hidden_dim.is_multiple_of(self.n_heads) {
            return Err(Error::config(format!(
                "hidden_dim {} not divisible by n_heads {}",
                self.hidden_dim, self.n_heads
            )));
        }
        if self.max_seq_len < 3 {
            return Err(Error::config("max_seq_len must be at least 3"));
        }
        if self.vocab_size <= crate::tokenizer::NUM_SPECIALS {
            return Err(Error::config("vocab_size must exceed the special tokens"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config("dropout_rate must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Which parameters fine-tuning may update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FineTuneScope {
    /// Pooler and classifier only.
    HeadOnly,
    /// Last encoder layer plus pooler and classifier.
    #[default]
    LastLayerAndHead,
    /// Every parameter except the masked-LM head.
    All,
}

impl FineTuneScope {
    /// Lowest encoder layer that receives gradients, and whether embeddings do.
    pub(crate) fn depth(self, n_layers: usize) -> (usize, bool) {
        match self {
            FineTuneScope::HeadOnly => (n_layers, false),
            FineTuneScope::LastLayerAndHead => (n_layers - 1, false),
            FineTuneScope::All => (0, true),
        }
    }

    pub fn includes(self, tensor_name: &str, n_layers: usize) -> bool {
        if tensor_name.starts_with("pooler.") || tensor_name.starts_with("classifier.") {
            return true;
        }
        match self {
            FineTuneScope::HeadOnly => false,
            FineTuneScope::LastLayerAndHead => tensor_name.starts_with(&format!("layer{}.", n_layers - 1)),
            FineTuneScope::All => !tensor_name.starts_with("mlm."),
        }
    }
}

impl fmt::Display for FineTuneScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FineTuneScope::HeadOnly => "head_only",
            FineTuneScope::LastLayerAndHead => "last_layer_and_head",
            FineTuneScope::All => "all",
        })
    }
}

impl FromStr for FineTuneScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head_only" => Ok(FineTuneScope::HeadOnly),
            "last_layer_and_head" => Ok(FineTuneScope::LastLayerAndHead),
            "all" => Ok(FineTuneScope::All),
            _ => Err(Error::config(format!("unknown fine-tune scope `{s}`"))),
        }
    }
}
