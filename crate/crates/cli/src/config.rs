use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vqat_audio::PreprocessConfig;
use vqat_core::rng::derive_seed;
use vqat_eval::{ClassifierConfig, EvalConfig};
use vqat_prior::{GenerationMode, PriorConfig, StartPolicy};
use vqat_vqvae::{Case, VqvaeConfig};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Sequences per digit; unconditioned sets hold ten times this.
    pub per_class: usize,
    pub temperature: f64,
    pub start: StartPolicy,
    /// Defaults to conditioned when the prior is.
    pub mode: Option<GenerationMode>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self { per_class: 500, temperature: 1.0, start: StartPolicy::Bos, mode: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlotConfig {
    /// Columns per row of the grid.
    pub count: usize,
}

impl Default for PlotConfig {
    fn default() -> Self {
        Self { count: 4 }
    }
}

/// Every stage's settings. `case`, `conditioned` and `seed` at the top
/// level are the only source of those values; stage tables may not set
/// them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_root: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub case: Case,
    pub conditioned: bool,
    pub preprocess: PreprocessConfig,
    pub vqvae: VqvaeConfig,
    pub prior: PriorConfig,
    pub generate: GenerateConfig,
    pub classifier: ClassifierConfig,
    pub eval: EvalConfig,
    pub plot: PlotConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            data_root: PathBuf::from("data"),
            out_dir: PathBuf::from("run"),
            seed: 0,
            case: Case::Two,
            conditioned: false,
            preprocess: PreprocessConfig::default(),
            vqvae: VqvaeConfig::default(),
            prior: PriorConfig::default(),
            generate: GenerateConfig::default(),
            classifier: ClassifierConfig::default(),
            eval: EvalConfig::default(),
            plot: PlotConfig::default(),
        }
    }
}

const DERIVED_KEYS: &[(&str, &str)] = &[
    ("vqvae", "case"),
    ("vqvae", "seed"),
    ("prior", "context"),
    ("prior", "conditioned"),
    ("prior", "seed"),
    ("classifier", "seed"),
];

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for (table, key) in DERIVED_KEYS {
            if raw.get(*table).and_then(|t| t.get(*key)).is_some() {
                return Err(CliError::Usage(format!(
                    "config: `{table}.{key}` is derived from the top-level settings and may not be set"
                )));
            }
        }
        let cfg: Self = raw.try_into().map_err(|e: toml::de::Error| CliError::Usage(format!("config: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Propagates top-level settings into the stage configs and derives
    /// per-stage seeds from the master seed.
    pub fn finalize(mut self) -> Result<Self, CliError> {
        self.vqvae.case = self.case;
        self.vqvae.seed = self.stage_seed("train-vqvae");
        self.prior.context = self.case.tokens() + 1;
        self.prior.conditioned = self.conditioned;
        self.prior.seed = self.stage_seed("train-prior");
        self.classifier.seed = self.stage_seed("evaluate");
        let bad = |e: String| CliError::Usage(format!("config: {e}"));
        self.preprocess.validate().map_err(|e| bad(e.to_string()))?;
        self.vqvae.validate().map_err(|e| bad(e.to_string()))?;
        self.prior.validate().map_err(|e| bad(e.to_string()))?;
        if !(self.generate.temperature >= 0.0) {
            return Err(bad("generate.temperature must be non-negative".into()));
        }
        if !(self.eval.confidence > 0.0 && self.eval.confidence <= 1.0) {
            return Err(bad("eval.confidence must lie in (0, 1]".into()));
        }
        Ok(self)
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn generation_mode(&self) -> GenerationMode {
        self.generate.mode.unwrap_or(if self.conditioned {
            GenerationMode::Conditioned
        } else {
            GenerationMode::Unconditioned
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_values_follow_top_level() {
        let c = PipelineConfig::from_toml("case = 1\nconditioned = true\nseed = 4\n[vqvae]\nepochs = 3\n")
            .unwrap()
            .finalize()
            .unwrap();
        assert_eq!(c.vqvae.case, Case::One);
        assert_eq!(c.vqvae.epochs, 3);
        assert_eq!(c.prior.context, 1409);
        assert!(c.prior.conditioned);
        assert_ne!(c.vqvae.seed, c.prior.seed);
        assert_eq!(c.generation_mode(), GenerationMode::Conditioned);
    }

    #[test]
    fn conflicting_and_unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_toml("[vqvae]\ncase = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[prior]\ncontext = 12\n").is_err());
        assert!(PipelineConfig::from_toml("bogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml("case = 3\n").is_err());
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        let text = toml::to_string(&c).unwrap();
        // Derived keys are emitted by serialization; strip them to reload.
        let mut raw: toml::Table = toml::from_str(&text).unwrap();
        for (t, k) in DERIVED_KEYS {
            raw.get_mut(*t).and_then(|v| v.as_table_mut()).map(|t| t.remove(*k));
        }
        let back = PipelineConfig::from_toml(&toml::to_string(&raw).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
