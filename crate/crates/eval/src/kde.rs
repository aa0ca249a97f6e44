//! Gaussian-kernel support estimates. Densities are kept in log space and
//! omit the kernel normalisation constant, which cancels in every
//! comparison made against a threshold from the same estimate.

use crate::error::{EvalError, Result};

#[derive(Clone, Debug)]
pub struct ManifoldEstimate {
    points: Vec<f64>,
    pub dim: usize,
    pub bandwidth: f64,
    pub confidence: f64,
    /// Log-density at or above which a query lies on the support.
    pub threshold: f64,
    /// Leave-one-out log-density of each reference point.
    pub log_density: Vec<f64>,
    /// Reference points at or above the threshold.
    pub retained: Vec<bool>,
}

fn flatten(points: &[Vec<f64>]) -> Result<(Vec<f64>, usize)> {
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 {
        return Err(EvalError::Usage("points must be non-empty vectors".into()));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(EvalError::Dimension("points have differing lengths".into()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EvalError::Usage("points contain non-finite values".into()));
    }
    Ok((points.concat(), dim))
}

/// Scott's rule for an isotropic kernel: the root mean per-axis variance
/// times `n^(-1/(d+4))`.
pub fn scott_bandwidth(points: &[Vec<f64>]) -> Result<f64> {
    let (flat, d) = flatten(points)?;
    let n = points.len();
    if n < 2 {
        return Err(EvalError::Usage("bandwidth needs at least 2 points".into()));
    }
    let mut var = 0.0;
    for j in 0..d {
        let mean = (0..n).map(|i| flat[i * d + j]).sum::<f64>() / n as f64;
        var += (0..n).map(|i| (flat[i * d + j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    let sigma = (var / d as f64).sqrt();
    if !(sigma > 0.0) {
        return Err(EvalError::Singular("all points are identical".into()));
    }
    Ok(sigma * (n as f64).powf(-1.0 / (d as f64 + 4.0)))
}

/// Order-independent log-sum-exp: terms are sorted first so the result
/// does not depend on the order of the reference points.
fn log_sum_exp(terms: &mut [f64]) -> f64 {
    terms.sort_by(f64::total_cmp);
    let m = match terms.last() {
        Some(&m) if m.is_finite() => m,
        _ => return f64::NEG_INFINITY,
    };
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl ManifoldEstimate {
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn kernel_terms(&self, q: &[f64], skip: Option<usize>, out: &mut Vec<f64>) {
        let s = 1.0 / (2.0 * self.bandwidth * self.bandwidth);
        out.clear();
        for (i, p) in self.points.chunks(self.dim).enumerate() {
            if Some(i) == skip {
                continue;
            }
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            out.push(-d2 * s);
        }
    }

    /// Log of the mean kernel value over all reference points.
    pub fn log_density_at(&self, q: &[f64]) -> Result<f64> {
        if q.len() != self.dim {
            return Err(EvalError::Dimension(format!("query has {} dims, support has {}", q.len(), self.dim)));
        }
        let mut terms = Vec::with_capacity(self.len());
        self.kernel_terms(q, None, &mut terms);
        Ok(log_sum_exp(&mut terms) - (self.len() as f64).ln())
    }

    pub fn contains(&self, q: &[f64]) -> Result<bool> {
        Ok(self.log_density_at(q)? >= self.threshold)
    }

    /// Fraction of `queries` on this support.
    pub fn coverage(&self, queries: &[Vec<f64>]) -> Result<f64> {
        if queries.is_empty() {
            return Err(EvalError::Usage("no query points".into()));
        }
        let mut hits = 0usize;
        for q in queries {
            hits += self.contains(q)? as usize;
        }
        Ok(hits as f64 / queries.len() as f64)
    }
}

/// Leave-one-out KDE over `points`; the threshold keeps the
/// `confidence` fraction of highest-density points.
pub fn kde_support(points: &[Vec<f64>], bandwidth: f64, confidence: f64) -> Result<ManifoldEstimate> {
    let (flat, dim) = flatten(points)?;
    let n = points.len();
    if n < 2 {
        return Err(EvalError::Usage("support estimate needs at least 2 points".into()));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(EvalError::Usage(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if !(confidence > 0.0 && confidence <= 1.0) {
        return Err(EvalError::Usage(format!("confidence must lie in (0, 1], got {confidence}")));
    }
    if points.iter().all(|p| p == &points[0]) {
        return Err(EvalError::Singular("all points are identical".into()));
    }
    let mut est = ManifoldEstimate {
        points: flat,
        dim,
        bandwidth,
        confidence,
        threshold: 0.0,
        log_density: Vec::with_capacity(n),
        retained: Vec::new(),
    };
    let mut terms = Vec::with_capacity(n);
    for (i, p) in points.iter().enumerate() {
        est.kernel_terms(p, Some(i), &mut terms);
        est.log_density.push(log_sum_exp(&mut terms) - ((n - 1) as f64).ln());
    }
    let mut sorted = est.log_density.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let keep = ((confidence * n as f64).ceil() as usize).clamp(1, n);
    est.threshold = sorted[keep - 1];
    est.retained = est.log_density.iter().map(|&l| l >= est.threshold).collect();
    Ok(est)
}

/// Fraction of fake points lying on the real support.
pub fn fidelity(fakes: &[Vec<f64>], real: &ManifoldEstimate) -> Result<f64> {
    if fakes.is_empty() {
        return Err(EvalError::Usage("fake set is empty".into()));
    }
    real.coverage(fakes)
}

/// Fraction of real points lying on the fake support.
pub fn diversity(reals: &[Vec<f64>], fake: &ManifoldEstimate) -> Result<f64> {
    if reals.is_empty() {
        return Err(EvalError::Usage("real set is empty".into()));
    }
    fake.coverage(reals)
}

/// Harmonic mean of fidelity and diversity; 0 when both are 0.
pub fn top_f1(fidelity: f64, diversity: f64) -> f64 {
    let s = fidelity + diversity;
    if s == 0.0 {
        0.0
    } else {
        2.0 * fidelity * diversity / s
    }
}
