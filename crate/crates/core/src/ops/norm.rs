use crate::scalar::Scalar;

/// Layer normalisation over the trailing `dim` axis of `x`.
pub fn layer_norm<T: Scalar>(x: &[T], dim: usize, gamma: &[T], beta: &[T], eps: f64) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for (row, o) in x.chunks(dim).zip(out.chunks_mut(dim)) {
        let (mean, rstd) = moments(row, eps);
        for j in 0..dim {
            o[j] = (row[j] - mean) * rstd * gamma[j] + beta[j];
        }
    }
    out
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward<T: Scalar>(
    x: &[T],
    dim: usize,
    gamma: &[T],
    dy: &[T],
    eps: f64,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dx = vec![T::zero(); x.len()];
    let mut dgamma = vec![T::zero(); dim];
    let mut dbeta = vec![T::zero(); dim];
    let n = T::from_f64(dim as f64);
    let mut xhat = vec![T::zero(); dim];
    let mut g = vec![T::zero(); dim];
    for ((row, dyr), dxr) in x.chunks(dim).zip(dy.chunks(dim)).zip(dx.chunks_mut(dim)) {
        let (mean, rstd) = moments(row, eps);
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for j in 0..dim {
            xhat[j] = (row[j] - mean) * rstd;
            g[j] = dyr[j] * gamma[j];
            dgamma[j] += dyr[j] * xhat[j];
            dbeta[j] += dyr[j];
            sum_g += g[j];
            sum_gx += g[j] * xhat[j];
        }
        for j in 0..dim {
            dxr[j] = rstd * (g[j] - sum_g / n - xhat[j] * sum_gx / n);
        }
    }
    (dx, dgamma, dbeta)
}

fn moments<T: Scalar>(row: &[T], eps: f64) -> (T, T) {
    let n = T::from_f64(row.len() as f64);
    let mean = row.iter().copied().sum::<T>() / n;
    let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    (mean, T::one() / (var + T::from_f64(eps)).sqrt())
}
