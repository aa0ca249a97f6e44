//! Synthetic spoken-digit stand-ins for fixtures and smoke runs. Each digit
//! gets its own formant pair and pitch contour; speakers shift the pitch.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng;
use vqat_core::rng::{derive_seed, seeded, standard_normal};

use crate::error::Result;
use crate::wav::write_wav;

const FORMANTS: [(f64, f64); 10] = [
    (300.0, 870.0),
    (280.0, 2250.0),
    (400.0, 1900.0),
    (530.0, 1840.0),
    (640.0, 1190.0),
    (660.0, 1720.0),
    (310.0, 2020.0),
    (490.0, 1350.0),
    (730.0, 1090.0),
    (570.0, 840.0),
];

/// One utterance: silence, a voiced harmonic segment, silence, plus a
/// little noise. Deterministic in `(digit, speaker, sample_rate, seed)`.
pub fn synth_utterance(digit: u8, speaker: u32, sample_rate: u32, seed: u64) -> Vec<f64> {
    let d = (digit % 10) as usize;
    let mut rng = seeded(derive_seed(seed, &format!("synth/{d}/{speaker}")));
    let sr = sample_rate as f64;
    let lead = (sr * rng.gen_range(0.05..0.2)) as usize;
    let body = (sr * (0.35 + 0.04 * d as f64 + rng.gen_range(0.0..0.1))) as usize;
    let tail = (sr * rng.gen_range(0.05..0.2)) as usize;
    let f0 = 95.0 + 17.0 * (speaker % 8) as f64 + rng.gen_range(-5.0..5.0);
    let glide = if d % 2 == 0 { 0.25 } else { -0.2 };
    let (f1, f2) = FORMANTS[d];
    let nyquist = sr / 2.0;

    let mut out = vec![0.0; lead + body + tail];
    let mut phase = 0.0;
    for i in 0..body {
        let t = i as f64 / body as f64;
        let pitch = f0 * (1.0 + glide * t);
        phase += 2.0 * PI * pitch / sr;
        let mut v = 0.0;
        let mut h = 1.0;
        while h * pitch < nyquist.min(4000.0) {
            let f = h * pitch;
            let gain = (-((f - f1) / 120.0).powi(2)).exp()
                + 0.6 * (-((f - f2) / 180.0).powi(2)).exp()
                + 0.02;
            v += gain * (h * phase).sin();
            h += 1.0;
        }
        let env = (PI * t).sin().powf(0.6);
        out[lead + i] = 0.3 * env * v;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-9);
    for v in out.iter_mut() {
        *v = 0.8 * *v / peak + 0.002 * standard_normal(&mut rng);
    }
    out
}

/// Writes `digits x speakers x per_pair` files named `digit_speaker_index.wav`.
pub fn write_synthetic_corpus(
    dir: &Path,
    digits: &[u8],
    speakers: u32,
    per_pair: u32,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for &d in digits {
        for s in 0..speakers {
            for k in 0..per_pair {
                let path = dir.join(format!("{d}_{:02}_{k}.wav", s + 1));
                let x = synth_utterance(d, s, sample_rate, derive_seed(seed, &format!("{k}")));
                write_wav(&path, &x, sample_rate)?;
                paths.push(path);
            }
        }
    }
    Ok(paths)
}
