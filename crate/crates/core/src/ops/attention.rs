//! Multi-head causal self-attention on a packed `[B, T, 3D]` q/k/v buffer.

use crate::error::{dim_err, NnError, Result};
use crate::ops::loss::softmax_in_place;
use crate::ops::matmul::{gemm, MatMut, MatRef};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionShape {
    pub batch: usize,
    pub seq: usize,
    pub dim: usize,
    pub heads: usize,
}

impl AttentionShape {
    pub fn new(batch: usize, seq: usize, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(NnError::Config(format!(
                "embedding width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            batch,
            seq,
            dim,
            heads,
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }

    fn qkv_offset(&self, b: usize, h: usize) -> usize {
        b * self.seq * 3 * self.dim + h * self.head_dim()
    }

    fn out_offset(&self, b: usize, h: usize) -> usize {
        b * self.seq * self.dim + h * self.head_dim()
    }

    fn probs_offset(&self, b: usize, h: usize) -> usize {
        (b * self.heads + h) * self.seq * self.seq
    }
}

/// Returns the `[B, T, D]` attention output (before the output projection)
/// and the `[B, H, T, T]` attention probabilities. Entries above the
/// diagonal are masked before the softmax and are exactly zero.
pub fn causal_attention<T: Scalar>(qkv: &[T], s: AttentionShape) -> Result<(Vec<T>, Vec<T>)> {
    let (bsz, t, d, dh) = (s.batch, s.seq, s.dim, s.head_dim());
    if qkv.len() != bsz * t * 3 * d {
        return dim_err(format!(
            "qkv buffer has {} values, expected {}",
            qkv.len(),
            bsz * t * 3 * d
        ));
    }
    let mut out = vec![T::zero(); bsz * t * d];
    let mut probs = vec![T::zero(); bsz * s.heads * t * t];
    let scale = T::from_f64(s.scale());
    for b in 0..bsz {
        for h in 0..s.heads {
            let off = s.qkv_offset(b, h);
            let q = MatRef::strided(qkv, off, t, dh, 3 * d, 1);
            let k = MatRef::strided(qkv, off + d, t, dh, 3 * d, 1);
            let v = MatRef::strided(qkv, off + 2 * d, t, dh, 3 * d, 1);
            let p = &mut probs[s.probs_offset(b, h)..][..t * t];
            gemm(scale, q, k.t(), T::zero(), MatMut::new(p, t, t));
            for (row, chunk) in p.chunks_mut(t).enumerate() {
                softmax_in_place(&mut chunk[..=row]);
                chunk[row + 1..].fill(T::zero());
            }
            gemm(
                T::one(),
                MatRef::new(p, t, t),
                v,
                T::zero(),
                MatMut::strided(&mut out, s.out_offset(b, h), t, dh, d, 1),
            );
        }
    }
    Ok((out, probs))
}

/// Gradient with respect to the packed q/k/v buffer.
pub fn causal_attention_backward<T: Scalar>(
    qkv: &[T],
    probs: &[T],
    grad_out: &[T],
    s: AttentionShape,
) -> Result<Vec<T>> {
    let (bsz, t, d, dh) = (s.batch, s.seq, s.dim, s.head_dim());
    if qkv.len() != bsz * t * 3 * d || grad_out.len() != bsz * t * d {
        return dim_err("attention backward buffers do not match the declared shape");
    }
    let mut dqkv = vec![T::zero(); qkv.len()];
    let mut dp = vec![T::zero(); t * t];
    let scale = T::from_f64(s.scale());
    for b in 0..bsz {
        for h in 0..s.heads {
            let off = s.qkv_offset(b, h);
            let q = MatRef::strided(qkv, off, t, dh, 3 * d, 1);
            let k = MatRef::strided(qkv, off + d, t, dh, 3 * d, 1);
            let v = MatRef::strided(qkv, off + 2 * d, t, dh, 3 * d, 1);
            let p = &probs[s.probs_offset(b, h)..][..t * t];
            let dout = MatRef::strided(grad_out, s.out_offset(b, h), t, dh, d, 1);
            // dV = P^T dO
            gemm(
                T::one(),
                MatRef::new(p, t, t).t(),
                dout,
                T::zero(),
                MatMut::strided(&mut dqkv, off + 2 * d, t, dh, 3 * d, 1),
            );
            // dP = dO V^T, then softmax backward in place.
            gemm(T::one(), dout, v.t(), T::zero(), MatMut::new(&mut dp, t, t));
            for (row, (dpr, pr)) in dp.chunks_mut(t).zip(p.chunks(t)).enumerate() {
                let dot: T = (0..=row).map(|j| dpr[j] * pr[j]).sum();
                for j in 0..=row {
                    dpr[j] = pr[j] * (dpr[j] - dot);
                }
                dpr[row + 1..].fill(T::zero());
            }
            let ds = MatRef::new(&dp, t, t);
            gemm(
                scale,
                ds,
                k,
                T::zero(),
                MatMut::strided(&mut dqkv, off, t, dh, 3 * d, 1),
            );
            gemm(
                scale,
                ds.t(),
                q,
                T::zero(),
                MatMut::strided(&mut dqkv, off + d, t, dh, 3 * d, 1),
            );
        }
    }
    Ok(dqkv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Per-head attention with an explicit -inf mask, written with plain loops.
    fn oracle(qkv: &[f64], b: usize, t: usize, d: usize, heads: usize) -> Vec<f64> {
        let dh = d / heads;
        let mut out = vec![0.0; b * t * d];
        for n in 0..b {
            for h in 0..heads {
                let at = |pos: usize, part: usize, j: usize| {
                    qkv[(n * t + pos) * 3 * d + part * d + h * dh + j]
                };
                for i in 0..t {
                    let mut logits: Vec<f64> = (0..t)
                        .map(|j| {
                            if j > i {
                                f64::NEG_INFINITY
                            } else {
                                (0..dh).map(|c| at(i, 0, c) * at(j, 1, c)).sum::<f64>()
                                    / (dh as f64).sqrt()
                            }
                        })
                        .collect();
                    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
                    logits.iter_mut().for_each(|l| *l = (*l - m).exp() / z);
                    for c in 0..dh {
                        out[(n * t + i) * d + h * dh + c] =
                            (0..t).map(|j| logits[j] * at(j, 2, c)).sum();
                    }
                }
            }
        }
        out
    }

    #[test]
    fn matches_per_head_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let qkv: Vec<f64> = (0..3 * 3 * 4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let s = AttentionShape::new(1, 3, 4, 2).unwrap();
        let (out, probs) = causal_attention(&qkv, s).unwrap();
        let want = oracle(&qkv, 1, 3, 4, 2);
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-6);
        }
        for row in probs.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_token_returns_value_path() {
        let qkv = vec![0.3f64, -0.2, 1.0, 2.0, 5.0, 6.0];
        let s = AttentionShape::new(1, 1, 2, 1).unwrap();
        let (out, _) = causal_attention(&qkv, s).unwrap();
        assert_eq!(out, vec![5.0, 6.0]);
    }

    #[test]
    fn rejects_indivisible_heads() {
        assert!(matches!(
            AttentionShape::new(1, 2, 10, 4),
            Err(NnError::Config(_))
        ));
    }
}
