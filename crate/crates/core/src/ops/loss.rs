use crate::error::{dim_err, NnError, Result};
use crate::scalar::Scalar;

/// Numerically stable softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(row)))`.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln()
}

/// Mean cross-entropy of `rows x vocab` logits against integer targets.
/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy<T: Scalar>(
    logits: &[T],
    vocab: usize,
    targets: &[usize],
) -> Result<(f64, Vec<T>)> {
    let rows = targets.len();
    if logits.len() != rows * vocab {
        return dim_err(format!(
            "{} logits for {rows} targets over vocab {vocab}",
            logits.len()
        ));
    }
    let mut grad = logits.to_vec();
    let mut loss = 0.0;
    let scale = T::from_f64(1.0 / rows.max(1) as f64);
    for (row, &t) in grad.chunks_mut(vocab).zip(targets) {
        if t >= vocab {
            return dim_err(format!("target {t} outside vocab {vocab}"));
        }
        let lse = log_sum_exp(row);
        loss += (lse - row[t]).as_f64();
        softmax_in_place(row);
        row[t] -= T::one();
        row.iter_mut().for_each(|g| *g *= scale);
    }
    let loss = loss / rows.max(1) as f64;
    if !loss.is_finite() {
        return Err(NnError::Numeric("cross-entropy is not finite".into()));
    }
    Ok((loss, grad))
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse<T: Scalar>(pred: &[T], target: &[T]) -> Result<(f64, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return dim_err(format!(
            "mse over {} and {} values",
            pred.len(),
            target.len()
        ));
    }
    let n = pred.len() as f64;
    let scale = T::from_f64(2.0 / n);
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            loss += (d * d).as_f64();
            scale * d
        })
        .collect();
    Ok((loss / n, grad))
}
