use serde::{Deserialize, Serialize};

use crate::error::{Result, VqError};

pub const CODEBOOK_SIZE: usize = 256;
pub const LATENT_DIM: usize = 64;
pub const INPUT_H: usize = 64;
pub const INPUT_W: usize = 88;

/// Compression case: spatial reduction by 2 (1408 tokens) or 4 (352 tokens).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Case {
    One,
    Two,
}

impl Case {
    pub fn factor(self) -> usize {
        match self {
            Case::One => 2,
            Case::Two => 4,
        }
    }

    pub fn grid(self) -> (usize, usize) {
        (INPUT_H / self.factor(), INPUT_W / self.factor())
    }

    pub fn tokens(self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn tag(self) -> u8 {
        match self {
            Case::One => 1,
            Case::Two => 2,
        }
    }
}

impl TryFrom<u8> for Case {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Case::One),
            2 => Ok(Case::Two),
            _ => Err(format!("case must be 1 or 2, got {v}")),
        }
    }
}

impl From<Case> for u8 {
    fn from(c: Case) -> u8 {
        c.tag()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantizerMode {
    Nearest,
    Ema,
    Stochastic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodebookInit {
    Uniform,
    /// k-means on the encoder outputs of the first training batch.
    Kmeans,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VqvaeConfig {
    pub case: Case,
    pub quantizer: QuantizerMode,
    pub beta: f64,
    pub ema_decay: f64,
    pub kl_weight: f64,
    pub temperature: f64,
    pub hidden: usize,
    pub codebook_init: CodebookInit,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for VqvaeConfig {
    fn default() -> Self {
        Self {
            case: Case::Two,
            quantizer: QuantizerMode::Nearest,
            beta: 0.25,
            ema_decay: 0.99,
            kl_weight: 1.0,
            temperature: 1.0,
            hidden: 128,
            codebook_init: CodebookInit::Uniform,
            epochs: 100,
            batch_size: 32,
            lr: 3e-4,
            seed: 0,
        }
    }
}

impl VqvaeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VqError::Config(m));
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return bad(format!(
                "commitment weight must be positive, got {}",
                self.beta
            ));
        }
        if !(self.ema_decay > 0.0 && self.ema_decay < 1.0) {
            return bad(format!(
                "ema decay must lie in (0, 1), got {}",
                self.ema_decay
            ));
        }
        if !(self.kl_weight >= 0.0) {
            return bad(format!(
                "kl weight must be non-negative, got {}",
                self.kl_weight
            ));
        }
        if !(self.temperature > 0.0) {
            return bad(format!(
                "temperature must be positive, got {}",
                self.temperature
            ));
        }
        if self.hidden == 0 || self.batch_size == 0 {
            return bad("hidden width and batch size must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad(format!("learning rate must be positive, got {}", self.lr));
        }
        Ok(())
    }
}
