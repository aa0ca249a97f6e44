use crate::error::{AudioError, Result};
use crate::wav::Waveform;

pub const TRIM_FRAME: usize = 2048;
pub const TRIM_HOP: usize = 512;

/// Centered frame RMS, zero-padded by half a frame on both sides.
pub fn frame_rms(x: &[f64], frame: usize, hop: usize) -> Vec<f64> {
    let half = frame / 2;
    let n_frames = 1 + x.len() / hop;
    (0..n_frames)
        .map(|i| {
            let center = i * hop;
            let start = center as isize - half as isize;
            let energy: f64 = (0..frame)
                .filter_map(|j| {
                    let idx = start + j as isize;
                    (idx >= 0 && (idx as usize) < x.len()).then(|| x[idx as usize].powi(2))
                })
                .sum();
            (energy / frame as f64).sqrt()
        })
        .collect()
}

/// Drops leading and trailing frames whose RMS lies more than
/// `threshold_db` below the loudest frame. The interior is untouched.
pub fn trim_silence(w: &Waveform, threshold_db: f64) -> Result<Waveform> {
    trim_silence_with(w, threshold_db, TRIM_FRAME, TRIM_HOP)
}

pub fn trim_silence_with(
    w: &Waveform,
    threshold_db: f64,
    frame: usize,
    hop: usize,
) -> Result<Waveform> {
    if w.samples.is_empty() {
        return Err(AudioError::EmptySignal);
    }
    let rms = frame_rms(&w.samples, frame, hop);
    let peak = rms.iter().copied().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(AudioError::EmptySignal);
    }
    let loud = |r: f64| r > 0.0 && 20.0 * (r / peak).log10() > -threshold_db;
    let first = rms
        .iter()
        .position(|&r| loud(r))
        .ok_or(AudioError::EmptySignal)?;
    let last = rms.iter().rposition(|&r| loud(r)).unwrap();
    let start = (first * hop).min(w.samples.len());
    let end = ((last + 1) * hop).min(w.samples.len());
    if end <= start {
        return Err(AudioError::EmptySignal);
    }
    Ok(w.with_samples(w.samples[start..end].to_vec()))
}
