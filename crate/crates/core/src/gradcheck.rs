//! Central-difference gradient verification.

/// Max over `coords` of `|analytic - numeric| / max(1, |analytic|)` where
/// the numeric derivative is `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps`.
pub fn grad_check_coords(
    mut value: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    x: &[f64],
    eps: f64,
    coords: &[usize],
) -> f64 {
    assert_eq!(analytic.len(), x.len(), "analytic gradient length mismatch");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let plus = value(&probe);
        probe[i] = orig - eps;
        let minus = value(&probe);
        probe[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}

/// Checks every coordinate. `f` returns the value and the analytic gradient.
pub fn grad_check(mut f: impl FnMut(&[f64]) -> (f64, Vec<f64>), x: &[f64], eps: f64) -> f64 {
    let (_, analytic) = f(x);
    let coords: Vec<usize> = (0..x.len()).collect();
    grad_check_coords(|p| f(p).0, &analytic, x, eps, &coords)
}
