use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{AudioError, Result};

/// Mono PCM audio scaled to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub label: Option<u8>,
    pub speaker: Option<String>,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        assert!(sample_rate > 0, "sample rate must be positive");
        Self {
            samples,
            sample_rate,
            label: None,
            speaker: None,
        }
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn with_samples(&self, samples: Vec<f64>) -> Self {
        Self {
            samples,
            ..self.clone()
        }
    }
}

/// Reads a PCM WAV file, downmixing multichannel audio by averaging.
/// Integer samples are divided by `2^(bits-1)`, so full-scale positive
/// 16-bit audio maps to `32767 / 32768`.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let reader = WavReader::open(path).map_err(map_hound)?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(AudioError::Parse("zero channels".into()));
    }
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Int => {
            if spec.bits_per_sample == 0 || spec.bits_per_sample > 32 {
                return Err(AudioError::UnsupportedFormat(format!(
                    "{}-bit integer PCM",
                    spec.bits_per_sample
                )));
            }
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale).map_err(map_hound))
                .collect::<Result<_>>()?
        }
        SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)).map_err(map_hound))
            .collect::<Result<_>>()?,
    };
    let samples = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    let mut w = Waveform::new(samples, spec.sample_rate);
    if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
        if let Some((label, speaker)) = parse_audio_mnist_name(name) {
            w.label = Some(label);
            w.speaker = Some(speaker);
        }
    }
    Ok(w)
}

fn map_hound(e: hound::Error) -> AudioError {
    match e {
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other
            ) =>
        {
            AudioError::Parse(format!("truncated file: {io}"))
        }
        hound::Error::IoError(io) => AudioError::Io(io),
        hound::Error::Unsupported => AudioError::UnsupportedFormat("encoding not supported".into()),
        hound::Error::FormatError(msg) => AudioError::Parse(msg.to_string()),
        other => AudioError::Parse(other.to_string()),
    }
}

/// Writes mono 16-bit PCM, clipping to `[-1, 1]`.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(map_hound)?;
    }
    w.finalize().map_err(map_hound)
}

/// Parses AudioMNIST names of the form `digit_speaker_index.wav`.
pub fn parse_audio_mnist_name(name: &str) -> Option<(u8, String)> {
    let stem = name.strip_suffix(".wav")?;
    let mut parts = stem.split('_');
    let digit: u8 = parts.next()?.parse().ok()?;
    let speaker = parts.next()?.to_string();
    parts.next()?.parse::<u32>().ok()?;
    if digit > 9 || parts.next().is_some() || speaker.is_empty() {
        return None;
    }
    Some((digit, speaker))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_audio_mnist_names() {
        assert_eq!(
            parse_audio_mnist_name("7_42_13.wav"),
            Some((7, "42".into()))
        );
        assert_eq!(parse_audio_mnist_name("12_42_13.wav"), None);
        assert_eq!(parse_audio_mnist_name("7_42.wav"), None);
        assert_eq!(parse_audio_mnist_name("notes.txt"), None);
    }

    #[test]
    fn sixteen_bit_extremes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("1_01_0.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [0i16, 32767, -32768] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let wav = load_wav(&path).unwrap();
        assert_eq!(wav.sample_rate, 8000);
        assert_eq!(wav.samples[0], 0.0);
        assert!((wav.samples[1] - 32767.0 / 32768.0).abs() < 1e-12);
        assert_eq!(wav.samples[2], -1.0);
        assert_eq!(wav.label, Some(1));
        assert_eq!(wav.speaker.as_deref(), Some("01"));
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for v in [16384i16, 0, -16384, -16384] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let wav = load_wav(&path).unwrap();
        assert_eq!(wav.samples, vec![0.25, -0.5]);
        assert_eq!(wav.label, None);
    }

    #[test]
    fn garbage_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x04\x00\x00\x00WAVEjunkjunkjunk").unwrap();
        let r = load_wav(&path);
        assert!(matches!(r, Err(AudioError::Parse(_))), "{r:?}");
        std::fs::write(&path, b"not a wav at all").unwrap();
        let r = load_wav(&path);
        assert!(matches!(r, Err(AudioError::Parse(_))), "{r:?}");
    }
}
