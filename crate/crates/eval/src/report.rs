use serde::{Deserialize, Serialize};
use vqat_core::Tensor;

use crate::classifier::{classify_accuracy, Classifier};
use crate::error::{EvalError, Result};
use crate::kde::{diversity, fidelity, kde_support, scott_bandwidth, top_f1};
use crate::pca::Pca;

pub const SUPPORT_METHOD: &str =
    "leave-one-out Gaussian KDE, support = density at or above the confidence quantile of the reference set";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// PCA width fit on the real set; 0 keeps raw features.
    pub pca_dims: usize,
    pub confidence: f64,
    /// Kernel bandwidth; Scott's rule on the real set when absent.
    pub bandwidth: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { pca_dims: 64, confidence: 0.9, bandwidth: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Classifier accuracy on the fakes against their conditioning class.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub accuracy: Option<f64>,
    /// Classifier accuracy on the real set, for reference.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub real_accuracy: Option<f64>,
    pub fidelity: f64,
    pub diversity: f64,
    pub top_f1: f64,
    pub n_real: usize,
    pub n_fake: usize,
    pub bandwidth: f64,
    pub feature_dims: usize,
    pub feature_space: String,
    pub support_method: String,
    pub config: EvalConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureScores {
    pub fidelity: f64,
    pub diversity: f64,
    pub bandwidth: f64,
    pub dims: usize,
}

/// Fidelity and diversity between two point sets, after an optional PCA
/// fit on the real set. One bandwidth serves both supports.
pub fn evaluate_features(real: &[Vec<f64>], fake: &[Vec<f64>], cfg: &EvalConfig) -> Result<FeatureScores> {
    if real.is_empty() || fake.is_empty() {
        return Err(EvalError::Usage("real and fake sets must be non-empty".into()));
    }
    let (real, fake) = if cfg.pca_dims > 0 {
        let pca = Pca::fit(real, cfg.pca_dims)?;
        (pca.project_all(real)?, pca.project_all(fake)?)
    } else {
        (real.to_vec(), fake.to_vec())
    };
    let bandwidth = match cfg.bandwidth {
        Some(h) => h,
        None => scott_bandwidth(&real)?,
    };
    let real_support = kde_support(&real, bandwidth, cfg.confidence)?;
    let fake_support = kde_support(&fake, bandwidth, cfg.confidence)?;
    Ok(FeatureScores {
        fidelity: fidelity(&fake, &real_support)?,
        diversity: diversity(&real, &fake_support)?,
        bandwidth,
        dims: real[0].len(),
    })
}

/// Inputs to [`evaluate_pipeline`]. Spectrograms are `[1, 64, 88]`.
pub struct EvalInputs<'a> {
    pub real: &'a [Tensor<f32>],
    pub real_labels: Option<&'a [u8]>,
    pub fake: &'a [Tensor<f32>],
    /// Conditioning classes; `None` for unconditioned fakes.
    pub fake_labels: Option<&'a [u8]>,
    pub classifier: Option<&'a Classifier<f32>>,
}

pub fn evaluate_pipeline(inputs: EvalInputs<'_>, cfg: &EvalConfig) -> Result<EvalReport> {
    let EvalInputs { real, real_labels, fake, fake_labels, classifier } = inputs;
    if real.len() != fake.len() {
        return Err(EvalError::Usage(format!("{} real items but {} fakes", real.len(), fake.len())));
    }
    let flat = |s: &[Tensor<f32>]| -> Vec<Vec<f64>> {
        s.iter().map(|t| t.data().iter().map(|&v| v as f64).collect()).collect()
    };
    let scores = evaluate_features(&flat(real), &flat(fake), cfg)?;
    let (accuracy, real_accuracy) = match classifier {
        Some(c) => (
            fake_labels.map(|l| classify_accuracy(c, fake, l)).transpose()?,
            real_labels.map(|l| classify_accuracy(c, real, l)).transpose()?,
        ),
        None => (None, None),
    };
    let feature_space = if cfg.pca_dims > 0 {
        format!("flattened decoded spectrograms, PCA to {} dims fit on the real set", scores.dims)
    } else {
        "flattened decoded spectrograms".to_string()
    };
    Ok(EvalReport {
        accuracy,
        real_accuracy,
        fidelity: scores.fidelity,
        diversity: scores.diversity,
        top_f1: top_f1(scores.fidelity, scores.diversity),
        n_real: real.len(),
        n_fake: fake.len(),
        bandwidth: scores.bandwidth,
        feature_dims: scores.dims,
        feature_space,
        support_method: SUPPORT_METHOD.to_string(),
        config: cfg.clone(),
    })
}
