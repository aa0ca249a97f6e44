use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;
use vqat_core::container::Archive;
use vqat_core::layers::{Conv2d, Linear};
use vqat_core::ops::{cross_entropy, relu, relu_backward, softmax_in_place};
use vqat_core::rng::{derive_seed, permutation, seeded};
use vqat_core::{Adam, AdamConfig, Module, Param, Scalar, Tensor};

use crate::error::{EvalError, Result};

pub const CLASSES: usize = 10;
const H: usize = 64;
const W: usize = 88;
const FLAT: usize = 128 * 8 * 11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 16, lr: 1e-3, seed: 0 }
    }
}

/// Three stride-2 3x3 convolutions (1 -> 32 -> 64 -> 128) with ReLU,
/// then a 256-unit hidden layer and a 10-way head.
#[derive(Clone, Debug)]
pub struct Classifier<T> {
    pub conv1: Conv2d<T>,
    pub conv2: Conv2d<T>,
    pub conv3: Conv2d<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub config: ClassifierConfig,
}

pub struct Cache<T> {
    x: Tensor<T>,
    p1: Tensor<T>,
    a1: Tensor<T>,
    p2: Tensor<T>,
    a2: Tensor<T>,
    p3: Tensor<T>,
    a3: Vec<T>,
    p4: Vec<T>,
    a4: Vec<T>,
}

fn relu_t<T: Scalar>(t: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(Tensor::new(t.shape().to_vec(), relu(t.data()))?)
}

impl<T: Scalar> Classifier<T> {
    pub fn new(config: ClassifierConfig) -> Self {
        let mut rng = seeded(derive_seed(config.seed, "classifier/init"));
        Self {
            conv1: Conv2d::new("conv1", 1, 32, 3, 2, 1, &mut rng),
            conv2: Conv2d::new("conv2", 32, 64, 3, 2, 1, &mut rng),
            conv3: Conv2d::new("conv3", 64, 128, 3, 2, 1, &mut rng),
            fc1: Linear::new("fc1", FLAT, 256, &mut rng),
            fc2: Linear::new("fc2", 256, CLASSES, &mut rng),
            config,
        }
    }

    /// Logits `[B, 10]` for a `[B, 1, 64, 88]` batch.
    pub fn forward(&self, x: &Tensor<T>) -> Result<(Vec<T>, Cache<T>)> {
        let (b, c, h, w) = x.dims4()?;
        if (c, h, w) != (1, H, W) {
            return Err(EvalError::Dimension(format!("classifier input {:?}, expected [B, 1, {H}, {W}]", x.shape())));
        }
        let p1 = self.conv1.forward(x)?;
        let a1 = relu_t(&p1)?;
        let p2 = self.conv2.forward(&a1)?;
        let a2 = relu_t(&p2)?;
        let p3 = self.conv3.forward(&a2)?;
        let a3 = relu(p3.data());
        let p4 = self.fc1.forward_rows(&a3, b);
        let a4 = relu(&p4);
        let logits = self.fc2.forward_rows(&a4, b);
        Ok((logits, Cache { x: x.clone(), p1, a1, p2, a2, p3, a3, p4, a4 }))
    }

    pub fn backward(&mut self, c: &Cache<T>, dlogits: &[T]) -> Result<()> {
        let b = c.x.shape()[0];
        let da4 = self.fc2.backward_rows(&c.a4, dlogits, b);
        let dp4 = relu_backward(&c.p4, &da4);
        let da3 = self.fc1.backward_rows(&c.a3, &dp4, b);
        let dp3 = Tensor::new(c.p3.shape().to_vec(), relu_backward(c.p3.data(), &da3))?;
        let da2 = self.conv3.backward(&c.a2, &dp3)?;
        let dp2 = Tensor::new(c.p2.shape().to_vec(), relu_backward(c.p2.data(), da2.data()))?;
        let da1 = self.conv2.backward(&c.a1, &dp2)?;
        let dp1 = Tensor::new(c.p1.shape().to_vec(), relu_backward(c.p1.data(), da1.data()))?;
        self.conv1.backward(&c.x, &dp1)?;
        Ok(())
    }

    /// Softmax class probabilities for each item.
    pub fn predict_proba(&self, items: &[Tensor<T>]) -> Result<Vec<Vec<f64>>> {
        let mut out = Vec::with_capacity(items.len());
        for chunk in items.chunks(32) {
            let (logits, _) = self.forward(&stack(chunk)?)?;
            for row in logits.chunks(CLASSES) {
                let mut p: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                softmax_in_place(&mut p);
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn predict(&self, items: &[Tensor<T>]) -> Result<Vec<u8>> {
        Ok(self
            .predict_proba(items)?
            .iter()
            .map(|p| {
                let mut best = 0;
                for (i, &v) in p.iter().enumerate() {
                    if v > p[best] {
                        best = i;
                    }
                }
                best as u8
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut a = Archive::new(json!({ "kind": "classifier", "config": self.config }));
        a.store_module("model", self, false);
        Ok(a.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let a = Archive::load(path)?;
        if a.header["kind"] != "classifier" {
            return Err(EvalError::Format("archive is not a classifier".into()));
        }
        let config: ClassifierConfig =
            serde_json::from_value(a.header["config"].clone()).map_err(|e| EvalError::Format(e.to_string()))?;
        let mut m = Self::new(config);
        a.load_module("model", &mut m)?;
        Ok(m)
    }
}

impl<T: Scalar> Module<T> for Classifier<T> {
    fn visit(&self, f: &mut dyn FnMut(&Param<T>)) {
        self.conv1.visit(f);
        self.conv2.visit(f);
        self.conv3.visit(f);
        self.fc1.visit(f);
        self.fc2.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        self.conv1.visit_mut(f);
        self.conv2.visit_mut(f);
        self.conv3.visit_mut(f);
        self.fc1.visit_mut(f);
        self.fc2.visit_mut(f);
    }
}

fn stack<T: Scalar>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(items.len() * H * W);
    for t in items {
        if t.numel() != H * W {
            return Err(EvalError::Dimension(format!("spectrogram shape {:?}", t.shape())));
        }
        data.extend_from_slice(t.data());
    }
    Ok(Tensor::new([items.len(), 1, H, W], data)?)
}

fn check_labels(n: usize, labels: &[u8]) -> Result<()> {
    if n != labels.len() {
        return Err(EvalError::Usage(format!("{n} items but {} labels", labels.len())));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
        return Err(EvalError::Usage(format!("label {l} is not a digit")));
    }
    Ok(())
}

/// Minibatch Adam on cross-entropy for `config.epochs` epochs.
pub fn train_classifier(
    items: &[Tensor<f32>],
    labels: &[u8],
    config: ClassifierConfig,
) -> Result<Classifier<f32>> {
    check_labels(items.len(), labels)?;
    let mut seen = [false; CLASSES];
    labels.iter().for_each(|&l| seen[l as usize] = true);
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(EvalError::Usage("training a classifier needs at least 2 classes".into()));
    }
    if config.batch_size == 0 {
        return Err(EvalError::Usage("batch_size must be positive".into()));
    }
    let mut model = Classifier::new(config.clone());
    let adam = Adam::new(AdamConfig::with_lr(config.lr))?;
    for epoch in 0..config.epochs {
        let mut rng = seeded(derive_seed(config.seed, &format!("classifier/epoch/{epoch}")));
        let order = permutation(items.len(), &mut rng);
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<Tensor<f32>> = idx.iter().map(|&i| items[i].clone()).collect();
            let targets: Vec<usize> = idx.iter().map(|&i| labels[i] as usize).collect();
            model.zero_grad();
            let (logits, cache) = model.forward(&stack(&batch)?)?;
            let (_, grad) = cross_entropy(&logits, CLASSES, &targets)?;
            model.backward(&cache, &grad)?;
            adam.step(&mut model)?;
        }
    }
    Ok(model)
}

/// Fraction of argmax predictions equal to `labels`.
pub fn classify_accuracy<T: Scalar>(model: &Classifier<T>, items: &[Tensor<T>], labels: &[u8]) -> Result<f64> {
    check_labels(items.len(), labels)?;
    if items.is_empty() {
        return Err(EvalError::Usage("no items to classify".into()));
    }
    let pred = model.predict(items)?;
    Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probabilities_are_distributions() {
        let m = Classifier::<f64>::new(ClassifierConfig::default());
        let items: Vec<Tensor<f64>> =
            (0..3).map(|k| Tensor::from_fn([1, H, W], |i| ((i * (k + 1)) % 7) as f64 / 7.0)).collect();
        for p in m.predict_proba(&items).unwrap() {
            assert_eq!(p.len(), CLASSES);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn usage_errors() {
        let item = Tensor::<f32>::zeros([1, H, W]);
        let r = train_classifier(&[item.clone(), item.clone()], &[3, 3], ClassifierConfig::default());
        assert!(matches!(r, Err(EvalError::Usage(_))));
        let m = Classifier::<f32>::new(ClassifierConfig::default());
        assert!(matches!(classify_accuracy(&m, &[item], &[1, 2]), Err(EvalError::Usage(_))));
    }
}
