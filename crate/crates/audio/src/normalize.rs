use vqat_core::Tensor;

use crate::error::{AudioError, Result};

pub const POWER_FLOOR: f64 = 1e-10;

/// Min-max normalized dB spectrogram with the scale needed to invert it.
#[derive(Clone, Debug, PartialEq)]
pub struct MelSpectrogram {
    pub values: Tensor<f64>,
    pub scale_min: f64,
    pub scale_max: f64,
    pub label: Option<u8>,
}

/// `10 log10(max(s, 1e-10))`, then scaled so the minimum is exactly 0 and
/// the maximum exactly 1.
pub fn to_db_and_normalize(spec: &Tensor<f64>, label: Option<u8>) -> Result<MelSpectrogram> {
    if spec.data().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(AudioError::DegenerateInput(
            "spectrogram has negative or non-finite power".into(),
        ));
    }
    let db = spec.map(|v| 10.0 * v.max(POWER_FLOOR).log10());
    let lo = db.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = db.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(AudioError::DegenerateInput(format!(
            "constant spectrogram at {lo} dB"
        )));
    }
    let values = db.map(|v| (v - lo) / (hi - lo));
    Ok(MelSpectrogram {
        values,
        scale_min: lo,
        scale_max: hi,
        label,
    })
}

/// Maps normalized values back to dB.
pub fn denormalize_db(m: &MelSpectrogram) -> Tensor<f64> {
    m.values
        .map(|v| m.scale_min + v * (m.scale_max - m.scale_min))
}

/// Maps normalized values back to power.
pub fn denormalize(m: &MelSpectrogram) -> Tensor<f64> {
    denormalize_db(m).map(|db| 10f64.powf(db / 10.0))
}
