use serde::{Deserialize, Serialize};
use vqat_core::{Scalar, Tensor};

use crate::error::{Result, VqError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub commit: f64,
    pub kl: Option<f64>,
}

fn mean_sq<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(VqError::Dimension(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&u, &v)| (u.as_f64() - v.as_f64()).powi(2))
        .sum();
    Ok(s / a.numel() as f64)
}

/// `L_R + beta * L_Q`, plus `weight * KL` when `kl = Some((weight, KL))`.
pub fn vqvae_loss<T: Scalar>(
    x: &Tensor<T>,
    x_hat: &Tensor<T>,
    z: &Tensor<T>,
    z_q: &Tensor<T>,
    beta: f64,
    kl: Option<(f64, f64)>,
) -> Result<LossParts> {
    let recon = mean_sq(x_hat, x)?;
    let commit = mean_sq(z, z_q)?;
    let total = recon + beta * commit + kl.map_or(0.0, |(w, v)| w * v);
    if !total.is_finite() {
        return Err(VqError::Numeric(format!(
            "loss is {total} (recon {recon}, commit {commit})"
        )));
    }
    Ok(LossParts {
        total,
        recon,
        commit,
        kl: kl.map(|(_, v)| v),
    })
}
