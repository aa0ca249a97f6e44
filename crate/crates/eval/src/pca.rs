use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{EvalError, Result};

fn centered(rows: &[Vec<f64>]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(EvalError::Usage("PCA needs at least 2 samples".into()));
    }
    let d = rows[0].len();
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(EvalError::Dimension("samples must share one non-zero length".into()));
    }
    let mut mean = vec![0.0; d];
    for r in rows {
        mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n as f64);
    }
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
    Ok((x, mean))
}

/// Eigen-decomposition of the sample covariance, largest first. Uses the
/// `n x n` Gram matrix when there are fewer samples than dimensions.
/// Returns eigenvalues and, for the first `k`, unit eigenvectors in input
/// space.
fn decompose(x: &DMatrix<f64>, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (n, d) = x.shape();
    let denom = (n - 1) as f64;
    let gram = d > n;
    let m = if gram { x * x.transpose() } else { x.transpose() * x } / denom;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut vectors = Vec::new();
    for &i in order.iter().take(k) {
        let u = eig.eigenvectors.column(i);
        let v: Vec<f64> = if gram {
            let lam = eig.eigenvalues[i];
            if !(lam > 1e-12 * values[0].max(f64::MIN_POSITIVE)) {
                break;
            }
            let w = x.transpose() * u;
            let norm = w.norm();
            w.iter().map(|a| a / norm).collect()
        } else {
            u.iter().copied().collect()
        };
        vectors.push(v);
    }
    (values, vectors)
}

/// Covariance eigenvalues of `rows` in descending order.
pub fn eigenvalues(rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    let (x, _) = centered(rows)?;
    Ok(decompose(&x, 0).0)
}

/// Smallest number of leading components whose variance reaches
/// `threshold` of the total. Constant data needs 0 components.
pub fn pca_explained_variance(rows: &[Vec<f64>], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(EvalError::Usage(format!("threshold must lie in (0, 1], got {threshold}")));
    }
    let vals = eigenvalues(rows)?;
    let total: f64 = vals.iter().sum();
    if total <= 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, v) in vals.iter().enumerate() {
        acc += v;
        if acc >= threshold * total {
            return Ok(k + 1);
        }
    }
    Ok(vals.len())
}

/// Linear projection onto the leading principal axes.
#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    pub components: Vec<Vec<f64>>,
    pub explained: Vec<f64>,
}

impl Pca {
    /// Keeps up to `k` axes; fewer when the data has lower rank.
    pub fn fit(rows: &[Vec<f64>], k: usize) -> Result<Self> {
        let (x, mean) = centered(rows)?;
        let (vals, mut components) = decompose(&x, k);
        let top = vals[0].max(f64::MIN_POSITIVE);
        let rank = vals.iter().take_while(|&&v| v > 1e-12 * top).count();
        components.truncate(rank.min(k));
        if components.is_empty() {
            return Err(EvalError::Singular("data has no variance".into()));
        }
        // Fix each axis's sign so the largest-magnitude entry is positive.
        for c in &mut components {
            let big = c.iter().cloned().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if big < 0.0 {
                c.iter_mut().for_each(|v| *v = -*v);
            }
        }
        let explained = vals[..components.len()].to_vec();
        Ok(Self { mean, components, explained })
    }

    pub fn dims(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.mean.len() {
            return Err(EvalError::Dimension(format!("row has {} dims, PCA fit on {}", row.len(), self.mean.len())));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(row).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect())
    }

    pub fn project_all(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.project(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vqat_core::rng::{seeded, standard_normal};

    #[test]
    fn rank_one_needs_one_component() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64, -(i as f64)]).collect();
        assert_eq!(pca_explained_variance(&rows, 0.99).unwrap(), 1);
    }

    #[test]
    fn gram_path_matches_covariance_path() {
        let mut r = seeded(3);
        let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..10).map(|_| standard_normal(&mut r)).collect()).collect();
        let wide = eigenvalues(&rows).unwrap();
        // Oracle: explicit 10x10 covariance.
        let n = rows.len() as f64;
        let mean: Vec<f64> = (0..10).map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / n).collect();
        let cov = DMatrix::from_fn(10, 10, |a, b| {
            rows.iter().map(|x| (x[a] - mean[a]) * (x[b] - mean[b])).sum::<f64>() / (n - 1.0)
        });
        let mut full: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
        full.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in wide.iter().zip(&full) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_recovers_the_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let p = Pca::fit(&rows, 5).unwrap();
        assert_eq!(p.dims(), 1);
        let y = p.project(&[9.0, 9.0]).unwrap();
        assert!((y[0] - 4.5 * 2f64.sqrt()).abs() < 1e-9);
        assert!(Pca::fit(&vec![vec![1.0, 1.0]; 3], 2).is_err());
    }
}
