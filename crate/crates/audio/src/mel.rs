use vqat_core::Tensor;

use crate::error::{AudioError, Result};
use crate::pipeline::PreprocessConfig;
use crate::stft::{frame_count, stft};
use crate::wav::Waveform;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters with unit peak, equally spaced on the HTK Mel scale.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub n_bins: usize,
    /// Row-major `n_mels x n_bins`.
    pub weights: Vec<f64>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, n_fft: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Self {
        let n_bins = n_fft / 2 + 1;
        let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / n_fft as f64;
        let mut weights = vec![0.0; n_mels * n_bins];
        for m in 0..n_mels {
            let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let up = (f - left) / (center - left);
                let down = (right - f) / (right - center);
                weights[m * n_bins + k] = up.min(down).max(0.0);
            }
        }
        Self {
            n_mels,
            n_bins,
            weights,
            centers_hz: edges[1..=n_mels].to_vec(),
        }
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * self.n_bins..(m + 1) * self.n_bins]
    }

    /// Projects a power spectrum onto the Mel bands.
    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        (0..self.n_mels)
            .map(|m| self.row(m).iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Power Mel spectrogram of shape `[1, n_mels, frames]`, bands on rows.
pub fn mel_spectrogram(w: &Waveform, cfg: &PreprocessConfig) -> Result<Tensor<f64>> {
    let frames = frame_count(w.samples.len(), cfg.hop_length);
    if frames != cfg.n_frames {
        return Err(AudioError::Config(format!(
            "{} samples at hop {} give {frames} frames, expected {}",
            w.samples.len(),
            cfg.hop_length,
            cfg.n_frames
        )));
    }
    let fb = MelFilterbank::new(
        cfg.n_mels,
        cfg.n_fft,
        w.sample_rate,
        0.0,
        w.sample_rate as f64 / 2.0,
    );
    let spec = stft(&w.samples, cfg.n_fft, cfg.hop_length);
    let mut out = vec![0.0; cfg.n_mels * frames];
    for (t, frame) in spec.iter().enumerate() {
        let power: Vec<f64> = frame.iter().map(|c| c.norm_sqr()).collect();
        for (m, v) in fb.apply(&power).into_iter().enumerate() {
            out[m * frames + t] = v;
        }
    }
    Ok(Tensor::new(vec![1, cfg.n_mels, frames], out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> PreprocessConfig {
        PreprocessConfig::default()
    }

    fn bank() -> MelFilterbank {
        let c = cfg();
        MelFilterbank::new(c.n_mels, c.n_fft, c.target_sample_rate, 0.0, 11025.0)
    }

    #[test]
    fn mel_scale_round_trips() {
        for f in [0.0, 100.0, 1000.0, 11025.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn filters_cover_the_spectrum() {
        let fb = bank();
        for m in 0..fb.n_mels {
            assert!(fb.row(m).iter().sum::<f64>() > 0.0, "filter {m} is empty");
        }
        // DC sits on the first filter's zero edge; every other bin below
        // Nyquist must be picked up.
        for k in 1..fb.n_bins - 1 {
            let total: f64 = (0..fb.n_mels).map(|m| fb.weights[m * fb.n_bins + k]).sum();
            assert!(total > 0.0, "bin {k} uncovered");
        }
    }

    #[test]
    fn centers_strictly_increase() {
        let fb = bank();
        assert!(fb.centers_hz.windows(2).all(|w| w[1] > w[0]));
        assert!(fb.centers_hz[0] > 0.0 && *fb.centers_hz.last().unwrap() < 11025.0);
    }

    #[test]
    fn silence_maps_to_zero() {
        let w = Waveform::new(vec![0.0; cfg().target_len()], 22050);
        let s = mel_spectrogram(&w, &cfg()).unwrap();
        assert_eq!(s.shape(), &[1, 64, 88]);
        assert!(s.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_lands_in_nearest_band() {
        let c = cfg();
        let n = c.target_len();
        let w = Waveform::new(
            (0..n)
                .map(|i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / 22050.0).sin())
                .collect(),
            22050,
        );
        let s = mel_spectrogram(&w, &c).unwrap();
        let nearest = bank()
            .centers_hz
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        for t in 0..c.n_frames {
            let best = (0..c.n_mels)
                .max_by(|&a, &b| {
                    s.data()[a * c.n_frames + t].total_cmp(&s.data()[b * c.n_frames + t])
                })
                .unwrap();
            assert_eq!(best, nearest, "frame {t}");
        }
    }

    #[test]
    fn wrong_length_is_a_config_error() {
        let w = Waveform::new(vec![0.1; 30_000], 22050);
        assert!(matches!(
            mel_spectrogram(&w, &cfg()),
            Err(AudioError::Config(_))
        ));
    }
}
