use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::stft::{istft, stft};
use crate::wav::Waveform;

pub const STRETCH_N_FFT: usize = 2048;
pub const STRETCH_HOP: usize = 512;

/// Phase-vocoder time stretch to exactly `round(target_duration * sr)`
/// samples. Pitch is preserved; only the frame rate changes.
pub fn time_stretch(w: &Waveform, target_duration: f64) -> Waveform {
    let target_len = (target_duration * w.sample_rate as f64).round() as usize;
    time_stretch_to_len(w, target_len)
}

pub fn time_stretch_to_len(w: &Waveform, target_len: usize) -> Waveform {
    if w.samples.is_empty() || target_len == 0 {
        return w.with_samples(vec![0.0; target_len]);
    }
    let rate = w.samples.len() as f64 / target_len as f64;
    let (n_fft, hop) = (STRETCH_N_FFT, STRETCH_HOP);
    let frames = stft(&w.samples, n_fft, hop);
    let stretched = phase_vocoder(&frames, rate, hop, n_fft);
    w.with_samples(istft(&stretched, n_fft, hop, target_len))
}

/// Resamples the frame sequence at fractional steps of `rate`,
/// interpolating magnitudes and accumulating per-bin phase advance.
pub fn phase_vocoder(
    frames: &[Vec<Complex64>],
    rate: f64,
    hop: usize,
    n_fft: usize,
) -> Vec<Vec<Complex64>> {
    let n_bins = frames[0].len();
    let expected: Vec<f64> = (0..n_bins)
        .map(|k| 2.0 * PI * hop as f64 * k as f64 / n_fft as f64)
        .collect();
    let zero = vec![Complex64::default(); n_bins];
    let at = |i: usize| frames.get(i).unwrap_or(&zero);
    let mut phase: Vec<f64> = frames[0].iter().map(|c| c.arg()).collect();
    let n_out = (frames.len() as f64 / rate).ceil() as usize;
    let mut out = Vec::with_capacity(n_out);
    for t in 0..n_out {
        let step = t as f64 * rate;
        let i = step.floor() as usize;
        let alpha = step - i as f64;
        let (c0, c1) = (at(i), at(i + 1));
        let mut frame = Vec::with_capacity(n_bins);
        for k in 0..n_bins {
            let mag = (1.0 - alpha) * c0[k].norm() + alpha * c1[k].norm();
            frame.push(Complex64::from_polar(mag, phase[k]));
            let mut dphi = c1[k].arg() - c0[k].arg() - expected[k];
            dphi -= 2.0 * PI * (dphi / (2.0 * PI)).round();
            phase[k] += expected[k] + dphi;
        }
        out.push(frame);
    }
    out
}
