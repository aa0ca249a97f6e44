use std::f64::consts::PI;

use crate::wav::Waveform;

/// Zero crossings of the sinc kernel kept on each side.
const ZERO_CROSSINGS: f64 = 16.0;

/// Band-limited resampling with a Hann-windowed sinc kernel. The cutoff is
/// the lower of the two Nyquist frequencies, so downsampling is
/// anti-aliased. Output length is `round(len * target / source)`.
pub fn resample(w: &Waveform, target: u32) -> Waveform {
    assert!(target > 0, "target sample rate must be positive");
    if w.sample_rate == target {
        return w.clone();
    }
    let ratio = target as f64 / w.sample_rate as f64;
    let cutoff = ratio.min(1.0);
    let half_width = ZERO_CROSSINGS / cutoff;
    let out_len = (w.samples.len() as f64 * ratio).round() as usize;
    let x = &w.samples;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let t = n as f64 / ratio;
        let lo = (t - half_width).ceil().max(0.0) as usize;
        let hi = ((t + half_width).floor() as usize).min(x.len().saturating_sub(1));
        let mut acc = 0.0;
        for (k, &xk) in x.iter().enumerate().take(hi + 1).skip(lo) {
            let d = t - k as f64;
            let window = 0.5 * (1.0 + (PI * d / half_width).cos());
            acc += xk * cutoff * sinc(cutoff * d) * window;
        }
        out.push(acc);
    }
    Waveform {
        samples: out,
        sample_rate: target,
        ..w.clone()
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}
