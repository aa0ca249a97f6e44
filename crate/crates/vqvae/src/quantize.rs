use rand::Rng;
use vqat_core::ops::softmax_in_place;
use vqat_core::rng::sample_categorical;
use vqat_core::{Scalar, Tensor};

use crate::codebook::Codebook;
use crate::error::{Result, VqError};

/// `[B, C, H, W]` to channel-last rows `[B*H*W, C]`.
pub fn to_rows<T: Scalar>(z: &Tensor<T>) -> Result<Vec<T>> {
    let (b, c, h, w) = z.dims4()?;
    let hw = h * w;
    let src = z.data();
    let mut out = vec![T::zero(); src.len()];
    for bi in 0..b {
        for ci in 0..c {
            let plane = &src[(bi * c + ci) * hw..][..hw];
            for (p, &v) in plane.iter().enumerate() {
                out[(bi * hw + p) * c + ci] = v;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`to_rows`].
pub fn from_rows<T: Scalar>(rows: &[T], shape: [usize; 4]) -> Result<Tensor<T>> {
    let [b, c, h, w] = shape;
    let hw = h * w;
    let mut out = vec![T::zero(); rows.len()];
    for bi in 0..b {
        for p in 0..hw {
            for ci in 0..c {
                out[(bi * c + ci) * hw + p] = rows[(bi * hw + p) * c + ci];
            }
        }
    }
    Ok(Tensor::new(shape, out)?)
}

pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// Index of the closest codeword to each row; ties go to the lower index.
pub fn nearest_indices<T: Scalar>(rows: &[T], cb: &Codebook<T>) -> Vec<usize> {
    rows.chunks(cb.dim())
        .map(|z| {
            let mut best = (0, f64::INFINITY);
            for i in 0..cb.size() {
                let d = squared_distance(z, cb.row(i));
                if d < best.1 {
                    best = (i, d);
                }
            }
            best.0
        })
        .collect()
}

fn gather<T: Scalar>(tokens: &[usize], cb: &Codebook<T>) -> Vec<T> {
    tokens
        .iter()
        .flat_map(|&t| cb.row(t).iter().copied())
        .collect()
}

/// Quantizer output for a `[B, dim, H, W]` latent.
#[derive(Clone, Debug)]
pub struct Quantized<T> {
    pub z_q: Tensor<T>,
    /// Row-major `[B, H*W]`.
    pub tokens: Vec<usize>,
    /// `[B*H*W, N]` assignment probabilities, stochastic mode only.
    pub probs: Option<Vec<f64>>,
}

fn check_dim<T: Scalar>(z: &Tensor<T>, cb: &Codebook<T>) -> Result<[usize; 4]> {
    let (b, c, h, w) = z.dims4()?;
    if c != cb.dim() {
        return Err(VqError::Dimension(format!(
            "latent has {c} channels, codewords have length {}",
            cb.dim()
        )));
    }
    Ok([b, c, h, w])
}

pub fn quantize_nearest<T: Scalar>(z: &Tensor<T>, cb: &Codebook<T>) -> Result<Quantized<T>> {
    let shape = check_dim(z, cb)?;
    let rows = to_rows(z)?;
    let tokens = nearest_indices(&rows, cb);
    Ok(Quantized {
        z_q: from_rows(&gather(&tokens, cb), shape)?,
        tokens,
        probs: None,
    })
}

/// `softmax(-||z_j - e_i||^2 / temperature)` for every row.
pub fn assignment_probs<T: Scalar>(rows: &[T], cb: &Codebook<T>, temperature: f64) -> Vec<f64> {
    let n = cb.size();
    let mut out = Vec::with_capacity(rows.len() / cb.dim() * n);
    for z in rows.chunks(cb.dim()) {
        let mut logits: Vec<f64> = (0..n)
            .map(|i| -squared_distance(z, cb.row(i)) / temperature)
            .collect();
        softmax_in_place(&mut logits);
        out.extend(logits);
    }
    out
}

/// Samples each token from the assignment distribution when `rng` is given,
/// otherwise takes the most probable codeword.
pub fn quantize_stochastic<T: Scalar, R: Rng>(
    z: &Tensor<T>,
    cb: &Codebook<T>,
    temperature: f64,
    rng: Option<&mut R>,
) -> Result<Quantized<T>> {
    if !(temperature > 0.0) {
        return Err(VqError::Config(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    let shape = check_dim(z, cb)?;
    let rows = to_rows(z)?;
    let probs = assignment_probs(&rows, cb, temperature);
    let n = cb.size();
    let tokens: Vec<usize> = match rng {
        Some(rng) => probs
            .chunks(n)
            .map(|p| sample_categorical(p, rng))
            .collect(),
        // Argmax of the softmax is the nearest codeword; reuse the exact
        // distance scan so ties resolve identically.
        None => nearest_indices(&rows, cb),
    };
    Ok(Quantized {
        z_q: from_rows(&gather(&tokens, cb), shape)?,
        tokens,
        probs: Some(probs),
    })
}

/// Mean over rows of `KL(P(.|z_j) || uniform)`.
pub fn kl_to_uniform(probs: &[f64], n: usize) -> f64 {
    let rows = probs.len() / n;
    let total: f64 = probs
        .chunks(n)
        .map(|p| {
            p.iter()
                .filter(|&&v| v > 0.0)
                .map(|&v| v * v.ln())
                .sum::<f64>()
                + (n as f64).ln()
        })
        .sum();
    total / rows.max(1) as f64
}

/// Gradient of [`kl_to_uniform`] with respect to the latent rows and the
/// codebook, through the distance logits.
pub fn kl_to_uniform_backward<T: Scalar>(
    rows: &[T],
    cb: &Codebook<T>,
    probs: &[f64],
    temperature: f64,
    weight: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (n, dim) = (cb.size(), cb.dim());
    let n_rows = rows.len() / dim;
    let scale = weight / n_rows.max(1) as f64;
    let mut dz = vec![0.0; rows.len()];
    let mut de = vec![0.0; n * dim];
    for (j, (z, p)) in rows.chunks(dim).zip(probs.chunks(n)).enumerate() {
        let neg_entropy: f64 = p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum();
        for (i, &pi) in p.iter().enumerate() {
            if pi <= 0.0 {
                continue;
            }
            // d KL / d logit_i, with logit_i = -||z - e_i||^2 / T.
            let g = scale * pi * (pi.ln() - neg_entropy);
            let e = cb.row(i);
            for k in 0..dim {
                let diff = z[k].as_f64() - e[k].as_f64();
                dz[j * dim + k] += g * (-2.0 / temperature) * diff;
                de[i * dim + k] += g * (2.0 / temperature) * diff;
            }
        }
    }
    (dz, de)
}

/// One exponential-moving-average codebook step from a batch of latent
/// rows and their assignments.
pub fn ema_update<T: Scalar>(cb: &mut Codebook<T>, rows: &[T], tokens: &[usize], decay: f64) {
    if decay >= 1.0 {
        return;
    }
    const EPS: f64 = 1e-5;
    let (n, dim) = (cb.size(), cb.dim());
    let mut counts = vec![0.0; n];
    let mut sums = vec![0.0; n * dim];
    for (z, &t) in rows.chunks(dim).zip(tokens) {
        counts[t] += 1.0;
        for k in 0..dim {
            sums[t * dim + k] += z[k].as_f64();
        }
    }
    for i in 0..n {
        cb.ema_cluster_size[i] = decay * cb.ema_cluster_size[i] + (1.0 - decay) * counts[i];
        for k in 0..dim {
            let s = &mut cb.ema_embed_sum[i * dim + k];
            *s = decay * *s + (1.0 - decay) * sums[i * dim + k];
        }
    }
    let values = cb.vectors.value.data_mut();
    for i in 0..n {
        let size = cb.ema_cluster_size[i];
        if size == 0.0 {
            continue;
        }
        for k in 0..dim {
            values[i * dim + k] = T::from_f64(cb.ema_embed_sum[i * dim + k] / (size + EPS));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqat_core::rng::seeded;

    fn toy(n: usize, dim: usize, seed: u64) -> Codebook<f64> {
        let mut r = seeded(seed);
        Codebook::from_tensor(Tensor::from_fn([n, dim], |_| r.gen_range(-1.0..1.0)))
    }

    #[test]
    fn rows_round_trip() {
        let z = Tensor::from_fn([2, 3, 2, 2], |i| i as f64);
        let rows = to_rows(&z).unwrap();
        assert_eq!(&rows[..3], &[0.0, 4.0, 8.0]);
        assert_eq!(from_rows(&rows, [2, 3, 2, 2]).unwrap(), z);
    }

    #[test]
    fn exact_codeword_maps_to_itself() {
        let cb = toy(8, 4, 1);
        let e5 = cb.row(5).to_vec();
        let z = Tensor::new([1, 4, 1, 1], e5.clone()).unwrap();
        let q = quantize_nearest(&z, &cb).unwrap();
        assert_eq!(q.tokens, vec![5]);
        assert_eq!(q.z_q.data(), &e5[..]);
    }

    #[test]
    fn ties_pick_lower_index() {
        let cb = Codebook::from_tensor(
            Tensor::new([3, 2], vec![5.0, 5.0, 1.0, 0.0, -1.0, 0.0]).unwrap(),
        );
        let z = Tensor::new([1, 2, 1, 1], vec![0.0, 0.0]).unwrap();
        assert_eq!(quantize_nearest(&z, &cb).unwrap().tokens, vec![1]);
    }

    #[test]
    fn channel_mismatch_is_a_dimension_error() {
        let cb = toy(8, 4, 1);
        let z = Tensor::<f64>::zeros([1, 3, 2, 2]);
        assert!(matches!(
            quantize_nearest(&z, &cb),
            Err(VqError::Dimension(_))
        ));
    }

    #[test]
    fn ema_decay_one_is_identity() {
        let mut cb = toy(8, 4, 2);
        let before = cb.vectors.value.clone();
        ema_update(&mut cb, &[0.3; 8], &[1, 2], 1.0);
        assert_eq!(cb.vectors.value, before);
    }

    #[test]
    fn ema_fresh_decay_zero_gives_mean() {
        let mut cb = Codebook::from_tensor(Tensor::new([1, 2], vec![9.0, 9.0]).unwrap());
        let rows = [1.0, 2.0, 3.0, 6.0, 5.0, 1.0];
        ema_update(&mut cb, &rows, &[0, 0, 0], 0.0);
        let mean = [3.0f64, 3.0];
        for (v, m) in cb.row(0).iter().zip(mean) {
            // Laplace epsilon shifts the mean by a relative 1e-5 / 3.
            assert!((v - m * 3.0 / (3.0 + 1e-5)).abs() < 1e-12);
        }
    }

    #[test]
    fn ema_unassigned_fresh_codeword_is_unchanged() {
        let mut cb = toy(4, 2, 3);
        let before = cb.row(3).to_vec();
        ema_update(&mut cb, &[0.1, 0.2, 0.3, 0.4], &[0, 1], 0.99);
        assert_eq!(cb.row(3), &before[..]);
        assert_ne!(cb.row(0), toy(4, 2, 3).row(0));
    }

    #[test]
    fn equidistant_codewords_give_uniform_probs() {
        let cb = Codebook::from_tensor(
            Tensor::new([4, 2], vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]).unwrap(),
        );
        let p = assignment_probs(&[0.0, 0.0], &cb, 0.7);
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(kl_to_uniform(&p, 4).abs() < 1e-12);
    }

    #[test]
    fn low_temperature_argmax_matches_nearest() {
        let cb = toy(8, 4, 4);
        let z = Tensor::from_fn([2, 4, 3, 3], |i| ((i * 37 % 17) as f64 - 8.0) / 3.0);
        let a = quantize_nearest(&z, &cb).unwrap();
        let b = quantize_stochastic::<f64, vqat_core::rng::StdRng>(&z, &cb, 1e-6, None).unwrap();
        assert_eq!(a.tokens, b.tokens);
        // Sampling at a vanishing temperature also collapses to the argmax.
        let c = quantize_stochastic(&z, &cb, 1e-9, Some(&mut seeded(1))).unwrap();
        assert_eq!(a.tokens, c.tokens);
    }

    #[test]
    fn stochastic_frequencies_match_softmax() {
        let cb = Codebook::from_tensor(Tensor::new([4, 1], vec![0.0, 0.5, 1.0, 2.0]).unwrap());
        let z = Tensor::new([1, 1, 1, 1], vec![0.6]).unwrap();
        let probs = assignment_probs(z.data(), &cb, 0.5);
        let mut rng = seeded(7);
        let mut counts = [0usize; 4];
        let draws = 100_000;
        for _ in 0..draws {
            let q = quantize_stochastic(&z, &cb, 0.5, Some(&mut rng)).unwrap();
            counts[q.tokens[0]] += 1;
        }
        for i in 0..4 {
            let f = counts[i] as f64 / draws as f64;
            assert!(
                (f - probs[i]).abs() < 0.01,
                "codeword {i}: {f} vs {}",
                probs[i]
            );
        }
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let cb = toy(5, 3, 9);
        let rows: Vec<f64> = vec![0.2, -0.4, 0.9, -0.3, 0.1, 0.5];
        let t = 0.8;
        let f = |r: &[f64], c: &Codebook<f64>| kl_to_uniform(&assignment_probs(r, c, t), 5);
        let probs = assignment_probs(&rows, &cb, t);
        let (dz, de) = kl_to_uniform_backward(&rows, &cb, &probs, t, 1.0);
        let eps = 1e-6;
        for k in 0..rows.len() {
            let mut p = rows.clone();
            p[k] += eps;
            let mut m = rows.clone();
            m[k] -= eps;
            let num = (f(&p, &cb) - f(&m, &cb)) / (2.0 * eps);
            assert!((num - dz[k]).abs() < 1e-6, "dz[{k}] {num} vs {}", dz[k]);
        }
        for k in 0..15 {
            let mut p = cb.clone();
            p.vectors.value.data_mut()[k] += eps;
            let mut m = cb.clone();
            m.vectors.value.data_mut()[k] -= eps;
            let num = (f(&rows, &p) - f(&rows, &m)) / (2.0 * eps);
            assert!((num - de[k]).abs() < 1e-6, "de[{k}] {num} vs {}", de[k]);
        }
    }
}
