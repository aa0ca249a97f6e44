use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AudioError, Result};
use crate::mel::mel_spectrogram;
use crate::normalize::{to_db_and_normalize, MelSpectrogram};
use crate::resample::resample;
use crate::stretch::time_stretch_to_len;
use crate::trim::trim_silence;
use crate::wav::{load_wav, Waveform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub target_sample_rate: u32,
    pub silence_threshold_db: f64,
    pub n_fft: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub n_frames: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            target_sample_rate: 22050,
            silence_threshold_db: 15.0,
            n_fft: 1024,
            hop_length: 256,
            n_mels: 64,
            n_frames: 88,
        }
    }
}

impl PreprocessConfig {
    /// Sample count that yields exactly `n_frames` centered frames.
    pub fn target_len(&self) -> usize {
        (self.n_frames - 1) * self.hop_length
    }

    pub fn target_duration(&self) -> f64 {
        self.target_len() as f64 / self.target_sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AudioError::Config(m.to_string()));
        if self.n_mels != 64 {
            return bad("n_mels must be 64");
        }
        if self.n_frames != 88 {
            return bad("n_frames must be 88");
        }
        if self.target_sample_rate == 0 || self.hop_length == 0 {
            return bad("sample rate and hop length must be positive");
        }
        if self.n_fft < 2 || self.n_fft % 2 != 0 {
            return bad("n_fft must be even and at least 2");
        }
        if !(self.silence_threshold_db > 0.0) {
            return bad("silence threshold must be positive");
        }
        Ok(())
    }
}

/// One line of the preprocessing manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub source: String,
    pub label: Option<u8>,
    pub speaker: Option<String>,
    pub scale_min: f64,
    pub scale_max: f64,
}

/// Resample, trim, stretch, Mel-project, convert to dB, normalize.
pub fn preprocess_waveform(w: &Waveform, cfg: &PreprocessConfig) -> Result<MelSpectrogram> {
    cfg.validate()?;
    if w.samples.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let w = resample(w, cfg.target_sample_rate);
    let w = trim_silence(&w, cfg.silence_threshold_db)?;
    let w = time_stretch_to_len(&w, cfg.target_len());
    let spec = mel_spectrogram(&w, cfg)?;
    to_db_and_normalize(&spec, w.label)
}

pub fn preprocess_file(path: &Path, cfg: &PreprocessConfig) -> Result<MelSpectrogram> {
    preprocess_waveform(&load_wav(path)?, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_utterance;

    #[test]
    fn default_geometry() {
        let c = PreprocessConfig::default();
        c.validate().unwrap();
        assert_eq!(c.target_len(), 22272);
        assert!((c.target_duration() - 1.0101).abs() < 1e-4);
        assert_eq!(c.n_mels * c.n_frames, 5632);
    }

    #[test]
    fn pipeline_shape_range_and_determinism() {
        let c = PreprocessConfig::default();
        for (digit, rate) in [(0u8, 48000u32), (7, 8000), (3, 22050)] {
            let mut w = Waveform::new(synth_utterance(digit, 2, rate, 11), rate);
            w.label = Some(digit);
            let a = preprocess_waveform(&w, &c).unwrap();
            let b = preprocess_waveform(&w, &c).unwrap();
            assert_eq!(a.values.shape(), &[1, 64, 88]);
            assert!(a.values.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(a.label, Some(digit));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn silent_recording_is_rejected() {
        let w = Waveform::new(vec![0.0; 16000], 16000);
        assert!(matches!(
            preprocess_waveform(&w, &PreprocessConfig::default()),
            Err(AudioError::EmptySignal)
        ));
    }

    #[test]
    fn bad_config_is_rejected() {
        let c = PreprocessConfig {
            n_mels: 40,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = PreprocessConfig {
            n_frames: 90,
            ..Default::default()
        };
        let w = Waveform::new(synth_utterance(1, 0, 22050, 0), 22050);
        assert!(matches!(
            preprocess_waveform(&w, &c),
            Err(AudioError::Config(_))
        ));
    }
}
