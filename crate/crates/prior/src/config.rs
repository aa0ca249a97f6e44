use serde::{Deserialize, Serialize};

use crate::error::{PriorError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    /// Sequence length including the start token.
    pub context: usize,
    pub n_blocks: usize,
    pub n_heads: usize,
    pub embed_dim: usize,
    pub mlp_dim: usize,
    pub vocab_size: usize,
    pub conditioned: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            context: 353,
            n_blocks: 12,
            n_heads: 8,
            embed_dim: 256,
            mlp_dim: 1024,
            vocab_size: crate::vocab::VOCAB_SIZE,
            conditioned: false,
            epochs: 50,
            batch_size: 8,
            lr: 3e-4,
            clip_norm: Some(1.0),
            seed: 0,
        }
    }
}

impl PriorConfig {
    /// Context for a token grid of `tokens` body positions.
    pub fn for_tokens(tokens: usize) -> Self {
        Self { context: tokens + 1, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PriorError::Config(m));
        if self.n_blocks != 12 || self.n_heads != 8 {
            return bad(format!(
                "the prior uses 12 blocks of 8 heads, got {} x {}",
                self.n_blocks, self.n_heads
            ));
        }
        if self.embed_dim == 0 || self.embed_dim % self.n_heads != 0 {
            return bad(format!("embed_dim {} must be a positive multiple of {}", self.embed_dim, self.n_heads));
        }
        if self.context < 2 || self.mlp_dim == 0 || self.batch_size == 0 {
            return bad("context must be at least 2; mlp_dim and batch_size positive".into());
        }
        if self.vocab_size < 2 {
            return bad("vocabulary too small".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        Ok(())
    }
}
