use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use vqat_core::container::Archive;
use vqat_core::rng::{derive_seed, permutation, seeded};
use vqat_core::{Adam, AdamConfig, Module};

use crate::config::PriorConfig;
use crate::error::{PriorError, Result};
use crate::model::Transformer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorEpoch {
    pub epoch: usize,
    /// Mean next-token cross-entropy in nats.
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct PriorTrainer {
    pub model: Transformer<f32>,
    pub adam: Adam,
    pub epoch: usize,
    pub steps: u64,
    pub history: Vec<PriorEpoch>,
}

impl PriorTrainer {
    pub fn new(config: PriorConfig) -> Result<Self> {
        let model = Transformer::new(config.clone(), &mut seeded(derive_seed(config.seed, "prior/init")))?;
        let mut adam = Adam::new(AdamConfig::with_lr(config.lr))?;
        if let Some(c) = config.clip_norm {
            adam = adam.with_clip_norm(c);
        }
        Ok(Self { model, adam, epoch: 0, steps: 0, history: Vec::new() })
    }

    pub fn config(&self) -> &PriorConfig {
        &self.model.config
    }

    /// Every sequence must fill the context exactly.
    pub fn check_sequences(&self, sequences: &[Vec<usize>]) -> Result<()> {
        if sequences.is_empty() {
            return Err(PriorError::Usage("no training sequences".into()));
        }
        let want = self.config().context;
        if let Some((i, s)) = sequences.iter().enumerate().find(|(_, s)| s.len() != want) {
            return Err(PriorError::Usage(format!(
                "sequence {i} has {} tokens, the context is {want}",
                s.len()
            )));
        }
        Ok(())
    }

    /// One optimizer update on the mean loss of `batch`. Sequences are
    /// pushed through one at a time to bound activation memory.
    pub fn step(&mut self, batch: &[&[usize]]) -> Result<f64> {
        if batch.is_empty() {
            return Err(PriorError::Usage("empty batch".into()));
        }
        self.model.zero_grad();
        let w = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for s in batch {
            loss += w * self.model.loss_and_backward(&[s], w)?;
        }
        self.adam.step(&mut self.model)?;
        self.steps += 1;
        Ok(loss)
    }

    pub fn run_epoch(&mut self, sequences: &[Vec<usize>]) -> Result<PriorEpoch> {
        self.check_sequences(sequences)?;
        let cfg = self.config().clone();
        let mut rng = seeded(derive_seed(cfg.seed, &format!("prior/epoch/{}", self.epoch)));
        let order = permutation(sequences.len(), &mut rng);
        let mut total = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&[usize]> = idx.iter().map(|&i| sequences[i].as_slice()).collect();
            total += self.step(&batch)? * idx.len() as f64;
        }
        let e = PriorEpoch { epoch: self.epoch, loss: total / sequences.len() as f64 };
        self.epoch += 1;
        self.history.push(e.clone());
        Ok(e)
    }

    pub fn train(&mut self, sequences: &[Vec<usize>], mut on_epoch: impl FnMut(&PriorEpoch)) -> Result<()> {
        self.check_sequences(sequences)?;
        while self.epoch < self.config().epochs {
            let e = self.run_epoch(sequences)?;
            on_epoch(&e);
        }
        Ok(())
    }

    /// Mean cross-entropy without updating anything.
    pub fn evaluate(&self, sequences: &[Vec<usize>]) -> Result<f64> {
        self.check_sequences(sequences)?;
        let mut total = 0.0;
        for s in sequences {
            total += self.model.loss(&[s])?;
        }
        Ok(total / sequences.len() as f64)
    }

    pub fn to_archive(&self) -> Archive {
        let header = json!({
            "kind": "prior",
            "config": self.model.config,
            "epoch": self.epoch,
            "steps": self.steps,
            "history": self.history,
            "adam": self.adam.config,
            "model_digest": self.model.digest(),
        });
        let mut a = Archive::new(header);
        a.store_module("model", &self.model, true);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        if a.header["kind"] != "prior" {
            return Err(PriorError::Format("archive is not a prior checkpoint".into()));
        }
        let bad = |e: serde_json::Error| PriorError::Format(e.to_string());
        let config: PriorConfig = serde_json::from_value(a.header["config"].clone()).map_err(bad)?;
        let mut t = Self::new(config)?;
        if let Ok(adam) = serde_json::from_value::<AdamConfig>(a.header["adam"].clone()) {
            t.adam.config = adam;
        }
        a.load_module("model", &mut t.model)?;
        t.epoch = a.header["epoch"].as_u64().unwrap_or(0) as usize;
        t.steps = a.header["steps"].as_u64().unwrap_or(0);
        t.history = serde_json::from_value(a.header["history"].clone()).map_err(bad)?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_archive().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
