use crate::error::{PriorError, Result};
use crate::vocab::{class_token, BOS, CODEBOOK_SIZE};

/// Prepends BOS, or the class token when `conditioned`.
pub fn build_training_sequences(
    latents: &[Vec<u16>],
    labels: &[Option<u8>],
    conditioned: bool,
) -> Result<Vec<Vec<usize>>> {
    if conditioned && labels.len() != latents.len() {
        return Err(PriorError::Usage(format!(
            "{} labels for {} latent grids",
            labels.len(),
            latents.len()
        )));
    }
    latents
        .iter()
        .enumerate()
        .map(|(i, body)| {
            let start = if conditioned {
                match labels[i] {
                    Some(d) if d < 10 => class_token(d),
                    Some(d) => return Err(PriorError::Usage(format!("label {d} is not a digit"))),
                    None => return Err(PriorError::Usage(format!("latent {i} has no label"))),
                }
            } else {
                BOS
            };
            if let Some(&t) = body.iter().find(|&&t| t as usize >= CODEBOOK_SIZE) {
                return Err(PriorError::Usage(format!("latent {i} holds token {t}")));
            }
            let mut seq = Vec::with_capacity(body.len() + 1);
            seq.push(start);
            seq.extend(body.iter().map(|&t| t as usize));
            Ok(seq)
        })
        .collect()
}
