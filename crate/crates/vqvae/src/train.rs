use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use vqat_core::container::{Archive, StoredTensor, TensorData};
use vqat_core::rng::{derive_seed, permutation, seeded};
use vqat_core::{Adam, AdamConfig, Module, Scalar, Tensor};

use crate::config::{CodebookInit, VqvaeConfig, INPUT_H, INPUT_W};
use crate::error::{Result, VqError};
use crate::kmeans::kmeans_init;
use crate::loss::LossParts;
use crate::model::VqVae;
use crate::quantize::to_rows;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: LossParts,
    /// Distinct codewords assigned during the epoch.
    pub codes_used: usize,
}

/// Stacks `[1, 64, 88]` (or `[1, 1, 64, 88]`) items into `[B, 1, 64, 88]`.
pub fn stack_batch<T: Scalar>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    let per = INPUT_H * INPUT_W;
    let mut data = Vec::with_capacity(items.len() * per);
    for t in items {
        if t.numel() != per {
            return Err(VqError::Dimension(format!(
                "spectrogram has shape {:?}, expected [1, {INPUT_H}, {INPUT_W}]",
                t.shape()
            )));
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::new([items.len(), 1, INPUT_H, INPUT_W], data)?)
}

/// Model, optimizer and loss history; everything needed to resume.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: VqVae<f32>,
    pub adam: Adam,
    pub epoch: usize,
    pub history: Vec<EpochStats>,
}

impl Trainer {
    pub fn new(config: VqvaeConfig) -> Result<Self> {
        let model = VqVae::new(
            config.clone(),
            &mut seeded(derive_seed(config.seed, "vqvae/init")),
        )?;
        let adam = Adam::new(AdamConfig::with_lr(config.lr))?;
        Ok(Self {
            model,
            adam,
            epoch: 0,
            history: Vec::new(),
        })
    }

    pub fn config(&self) -> &VqvaeConfig {
        &self.model.config
    }

    /// One pass over `data` in a seed-determined order.
    pub fn run_epoch(&mut self, data: &[Tensor<f32>]) -> Result<EpochStats> {
        if data.is_empty() {
            return Err(VqError::Usage("training set is empty".into()));
        }
        let cfg = self.model.config.clone();
        let mut rng = seeded(derive_seed(
            cfg.seed,
            &format!("vqvae/epoch/{}", self.epoch),
        ));
        let order = permutation(data.len(), &mut rng);
        let mut sum = LossParts::default();
        let mut kl_sum = 0.0;
        let mut used = vec![false; self.model.codebook.size()];
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<Tensor<f32>> = idx.iter().map(|&i| data[i].clone()).collect();
            let x = stack_batch(&items)?;
            if self.epoch == 0 && bi == 0 && cfg.codebook_init == CodebookInit::Kmeans {
                let rows = to_rows(&self.model.encode(&x)?)?;
                kmeans_init(&mut self.model.codebook, &rows, 10, &mut rng);
            }
            self.model.zero_grad();
            let out = self.model.forward_backward(&x, &mut rng)?;
            self.adam.step(&mut self.model)?;
            self.model.ema_step(&out);
            let w = idx.len() as f64;
            sum.total += w * out.loss.total;
            sum.recon += w * out.loss.recon;
            sum.commit += w * out.loss.commit;
            kl_sum += w * out.loss.kl.unwrap_or(0.0);
            out.tokens.iter().for_each(|&t| used[t] = true);
        }
        let n = data.len() as f64;
        let loss = LossParts {
            total: sum.total / n,
            recon: sum.recon / n,
            commit: sum.commit / n,
            kl: (cfg.quantizer == crate::config::QuantizerMode::Stochastic).then_some(kl_sum / n),
        };
        let stats = EpochStats {
            epoch: self.epoch,
            loss,
            codes_used: used.iter().filter(|&&u| u).count(),
        };
        self.epoch += 1;
        self.history.push(stats.clone());
        Ok(stats)
    }

    /// Runs until `config.epochs` epochs have completed.
    pub fn train(
        &mut self,
        data: &[Tensor<f32>],
        mut on_epoch: impl FnMut(&EpochStats),
    ) -> Result<()> {
        while self.epoch < self.model.config.epochs {
            let s = self.run_epoch(data)?;
            on_epoch(&s);
        }
        Ok(())
    }

    pub fn to_archive(&self) -> Archive {
        let header = json!({
            "kind": "vqvae",
            "config": self.model.config,
            "epoch": self.epoch,
            "history": self.history,
            "adam": self.adam.config,
        });
        let mut a = Archive::new(header);
        a.store_module("model", &self.model, true);
        let cb = &self.model.codebook;
        let (n, d) = (cb.size(), cb.dim());
        a.insert(
            "ema/cluster_size",
            StoredTensor::new(vec![n], TensorData::F64(cb.ema_cluster_size.clone()))
                .expect("shape"),
        );
        a.insert(
            "ema/embed_sum",
            StoredTensor::new(vec![n, d], TensorData::F64(cb.ema_embed_sum.clone()))
                .expect("shape"),
        );
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let bad = |m: String| VqError::Nn(vqat_core::NnError::Format(m));
        if a.header["kind"] != "vqvae" {
            return Err(bad("archive is not a VQ-VAE checkpoint".into()));
        }
        let config: VqvaeConfig =
            serde_json::from_value(a.header["config"].clone()).map_err(|e| bad(e.to_string()))?;
        let mut t = Self::new(config)?;
        if let Ok(adam) = serde_json::from_value::<AdamConfig>(a.header["adam"].clone()) {
            t.adam = Adam::new(adam)?;
        }
        a.load_module("model", &mut t.model)?;
        t.model.codebook.ema_cluster_size =
            a.get("ema/cluster_size")?.to_tensor::<f64>()?.into_data();
        t.model.codebook.ema_embed_sum = a.get("ema/embed_sum")?.to_tensor::<f64>()?.into_data();
        t.epoch = a.header["epoch"].as_u64().unwrap_or(0) as usize;
        t.history =
            serde_json::from_value(a.header["history"].clone()).map_err(|e| bad(e.to_string()))?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_archive().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_archive(&Archive::load(path)?)
    }
}
