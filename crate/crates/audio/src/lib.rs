//! Raw utterance to normalized `1 x 64 x 88` Mel-spectrogram:
//! resample, trim silence, time-stretch, Mel projection, dB, min-max.

pub mod error;
pub mod mel;
pub mod normalize;
pub mod pipeline;
pub mod resample;
pub mod stft;
pub mod stretch;
pub mod synth;
pub mod trim;
pub mod wav;

pub use error::{AudioError, Result};
pub use mel::{mel_spectrogram, MelFilterbank};
pub use normalize::{denormalize, to_db_and_normalize, MelSpectrogram};
pub use pipeline::{preprocess_file, preprocess_waveform, ManifestEntry, PreprocessConfig};
pub use resample::resample;
pub use stretch::time_stretch;
pub use trim::trim_silence;
pub use wav::{load_wav, parse_audio_mnist_name, write_wav, Waveform};
