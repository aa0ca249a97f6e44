use rand::Rng;

use crate::error::{PriorError, Result};
use crate::vocab::CODEBOOK_SIZE;

/// Anything that consumes one token at a time and returns next-token logits.
pub trait TokenModel {
    fn vocab_size(&self) -> usize;
    fn context(&self) -> usize;
    fn reset(&mut self);
    fn push(&mut self, token: usize) -> Result<Vec<f64>>;
}

/// Draws from `softmax(logits / temperature)` restricted to the first
/// `allowed` ids. Temperature 0 picks the lowest-index argmax.
pub fn sample_token<R: Rng>(logits: &[f64], temperature: f64, allowed: usize, rng: &mut R) -> Result<usize> {
    let allowed = allowed.min(logits.len());
    if allowed == 0 {
        return Err(PriorError::Usage("no tokens to sample from".into()));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(PriorError::Config(format!("temperature must be finite and non-negative, got {temperature}")));
    }
    let l = &logits[..allowed];
    if l.iter().any(|v| v.is_nan()) {
        return Err(PriorError::Usage("logits contain NaN".into()));
    }
    let mut best = 0;
    for (i, &v) in l.iter().enumerate() {
        if v > l[best] {
            best = i;
        }
    }
    if temperature == 0.0 {
        return Ok(best);
    }
    let m = l[best];
    let probs: Vec<f64> = l.iter().map(|&v| ((v - m) / temperature).exp()).collect();
    Ok(vqat_core::rng::sample_categorical(&probs, rng))
}

/// Feeds `start`, then samples `length` body tokens. Control tokens are
/// masked out of every body position. Returns the body only.
pub fn sample_sequence<M: TokenModel, R: Rng>(
    model: &mut M,
    start: usize,
    length: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<u16>> {
    sample_continuation(model, &[start], length, temperature, rng)
}

/// Like [`sample_sequence`] but with a longer fixed prefix. Tokens of the
/// prefix after the first count towards the body.
pub fn sample_continuation<M: TokenModel, R: Rng>(
    model: &mut M,
    prefix: &[usize],
    length: usize,
    temperature: f64,
    rng: &mut R,
) -> Result<Vec<u16>> {
    if prefix.is_empty() || prefix.len() > length + 1 {
        return Err(PriorError::Usage(format!("prefix of {} tokens for a body of {length}", prefix.len())));
    }
    if model.context() < length + 1 {
        return Err(PriorError::Config(format!(
            "context {} cannot hold a start token and {length} body tokens",
            model.context()
        )));
    }
    if let Some(&t) = prefix.iter().find(|&&t| t >= model.vocab_size()) {
        return Err(PriorError::Usage(format!("start token {t} outside vocabulary")));
    }
    if let Some(&t) = prefix[1..].iter().find(|&&t| t >= CODEBOOK_SIZE) {
        return Err(PriorError::Usage(format!("body token {t} is a control token")));
    }
    model.reset();
    let mut body: Vec<u16> = prefix[1..].iter().map(|&t| t as u16).collect();
    let mut logits = Vec::new();
    for &t in prefix {
        logits = model.push(t)?;
    }
    while body.len() < length {
        let t = sample_token(&logits, temperature, CODEBOOK_SIZE, rng)?;
        body.push(t as u16);
        if body.len() < length {
            logits = model.push(t)?;
        }
    }
    Ok(body)
}

/// Fixed logits regardless of history.
#[derive(Clone, Debug)]
pub struct ConstantModel {
    pub logits: Vec<f64>,
    pub context: usize,
}

impl TokenModel for ConstantModel {
    fn vocab_size(&self) -> usize {
        self.logits.len()
    }
    fn context(&self) -> usize {
        self.context
    }
    fn reset(&mut self) {}
    fn push(&mut self, _: usize) -> Result<Vec<f64>> {
        Ok(self.logits.clone())
    }
}
