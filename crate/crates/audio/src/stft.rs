use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Periodic Hann window of length `n`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

fn zero_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() + 2 * pad];
    out[pad..pad + x.len()].copy_from_slice(x);
    out
}

/// Number of centered frames for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    1 + len / hop
}

/// Centered, zero-padded short-time Fourier transform with a periodic
/// Hann window.
/// Returns `frames x (n_fft/2 + 1)` one-sided spectra.
pub fn stft(x: &[f64], n_fft: usize, hop: usize) -> Vec<Vec<Complex64>> {
    let padded = zero_pad(x, n_fft / 2);
    let window = hann(n_fft);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let n_frames = frame_count(x.len(), hop);
    let n_bins = n_fft / 2 + 1;
    let mut buf = vec![Complex64::default(); n_fft];
    (0..n_frames)
        .map(|f| {
            let start = f * hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let v = padded.get(start + i).copied().unwrap_or(0.0);
                *b = Complex64::new(v * window[i], 0.0);
            }
            fft.process(&mut buf);
            buf[..n_bins].to_vec()
        })
        .collect()
}

/// Inverse of [`stft`] by windowed overlap-add, normalised by the summed
/// squared window. Output is cut or zero-padded to `length`.
pub fn istft(frames: &[Vec<Complex64>], n_fft: usize, hop: usize, length: usize) -> Vec<f64> {
    let window = hann(n_fft);
    let ifft = FftPlanner::new().plan_fft_inverse(n_fft);
    let total = n_fft + hop * frames.len().saturating_sub(1);
    let mut out = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let mut buf = vec![Complex64::default(); n_fft];
    for (f, spec) in frames.iter().enumerate() {
        buf[..spec.len()].copy_from_slice(spec);
        // Hermitian completion of the one-sided spectrum.
        for k in 1..n_fft - spec.len() + 1 {
            buf[n_fft - k] = spec[k].conj();
        }
        buf[0].im = 0.0;
        if n_fft % 2 == 0 {
            buf[n_fft / 2].im = 0.0;
        }
        ifft.process(&mut buf);
        let start = f * hop;
        for i in 0..n_fft {
            out[start + i] += buf[i].re / n_fft as f64 * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }
    for (o, &w) in out.iter_mut().zip(&norm) {
        if w > 1e-10 {
            *o /= w;
        }
    }
    let pad = n_fft / 2;
    let mut y: Vec<f64> = out.into_iter().skip(pad).take(length).collect();
    y.resize(length, 0.0);
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, sr: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| 0.7 * (2.0 * PI * freq * i as f64 / sr).sin())
            .collect()
    }

    #[test]
    fn window_is_periodic() {
        let w = hann(8);
        assert_eq!(w[0], 0.0);
        assert!((w[4] - 1.0).abs() < 1e-15);
        assert!((w[1] - w[7]).abs() < 1e-15);
    }

    #[test]
    fn parseval_energy_of_a_tone() {
        let (n_fft, hop) = (1024, 256);
        let x = tone(1000.0, 22050.0, 22272);
        let time_energy: f64 = x.iter().map(|v| v * v).sum();
        let frames = stft(&x, n_fft, hop);
        let mut spec_energy = 0.0;
        for f in &frames {
            for (k, c) in f.iter().enumerate() {
                let weight = if k == 0 || k == n_fft / 2 { 1.0 } else { 2.0 };
                spec_energy += weight * c.norm_sqr();
            }
        }
        let w2: f64 = hann(n_fft).iter().map(|v| v * v).sum();
        let estimate = spec_energy / (n_fft as f64 * w2 / hop as f64);
        let rel = (estimate - time_energy).abs() / time_energy;
        assert!(rel < 0.05, "relative energy error {rel}");
    }

    #[test]
    fn round_trip_reconstructs() {
        let x: Vec<f64> = (0..5000)
            .map(|i| ((i * 37 % 101) as f64 / 50.0 - 1.0) * 0.5)
            .collect();
        let y = istft(&stft(&x, 512, 128), 512, 128, x.len());
        let err = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-9, "max error {err}");
    }
}
