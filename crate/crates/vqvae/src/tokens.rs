use serde::{Deserialize, Serialize};
use vqat_core::{Scalar, Tensor};

use crate::codebook::Codebook;
use crate::config::Case;
use crate::error::{Result, VqError};
use crate::model::VqVae;
use crate::quantize::from_rows;

/// Token indices for a batch, row-major `[batch, h*w]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenGrid {
    pub case: Case,
    pub batch: usize,
    pub indices: Vec<u16>,
}

impl TokenGrid {
    pub fn new(case: Case, indices: Vec<u16>, codebook_size: usize) -> Result<Self> {
        let per = case.tokens();
        if indices.is_empty() || indices.len() % per != 0 {
            return Err(VqError::Dimension(format!(
                "{} tokens do not form case-{} grids of {per}",
                indices.len(),
                case.tag()
            )));
        }
        if let Some(&t) = indices.iter().find(|&&t| t as usize >= codebook_size) {
            return Err(VqError::Range {
                token: t as usize,
                size: codebook_size,
            });
        }
        Ok(Self {
            case,
            batch: indices.len() / per,
            indices,
        })
    }

    pub fn from_usize(case: Case, tokens: &[usize], codebook_size: usize) -> Result<Self> {
        let indices = tokens
            .iter()
            .map(|&t| {
                u16::try_from(t).map_err(|_| VqError::Range {
                    token: t,
                    size: codebook_size,
                })
            })
            .collect::<Result<_>>()?;
        Self::new(case, indices, codebook_size)
    }

    pub fn row(&self, b: usize) -> &[u16] {
        let per = self.case.tokens();
        &self.indices[b * per..(b + 1) * per]
    }
}

/// Table lookup from tokens to a `[batch, dim, h, w]` latent.
pub fn tokens_to_codes<T: Scalar>(tokens: &TokenGrid, cb: &Codebook<T>) -> Result<Tensor<T>> {
    let (h, w) = tokens.case.grid();
    let mut rows = Vec::with_capacity(tokens.indices.len() * cb.dim());
    for &t in &tokens.indices {
        let t = t as usize;
        if t >= cb.size() {
            return Err(VqError::Range {
                token: t,
                size: cb.size(),
            });
        }
        rows.extend_from_slice(cb.row(t));
    }
    from_rows(&rows, [tokens.batch, cb.dim(), h, w])
}

/// Encodes `[1, 64, 88]` spectrograms in batches of `batch` to token rows.
pub fn encode_all<T: Scalar>(
    model: &VqVae<T>,
    data: &[Tensor<T>],
    batch: usize,
) -> Result<Vec<Vec<u16>>> {
    let mut out = Vec::with_capacity(data.len());
    for chunk in data.chunks(batch.max(1)) {
        let x = crate::train::stack_batch(chunk)?;
        let grid = TokenGrid::from_usize(
            model.case(),
            &model.encode_tokens(&x)?,
            model.codebook.size(),
        )?;
        out.extend((0..grid.batch).map(|b| grid.row(b).to_vec()));
    }
    Ok(out)
}
