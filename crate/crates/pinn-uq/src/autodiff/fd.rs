//! Finite-difference checking utilities.

/// Central-difference gradient of a scalar function at `point`.
pub fn central_diff_grad<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    point: &[f64],
    step: f64,
) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let orig = x[i];
        x[i] = orig + step;
        let fp = f(&x);
        x[i] = orig - step;
        let fm = f(&x);
        x[i] = orig;
        grad.push((fp - fm) / (2.0 * step));
    }
    grad
}

/// Compares an analytic gradient against central differences of `f`.
/// Returns the maximum over components of
/// `|analytic - central| / (|analytic| + 1e-12)`.
pub fn fd_check<F: FnMut(&[f64]) -> f64>(
    f: F,
    analytic_grad: &[f64],
    point: &[f64],
    step: f64,
) -> f64 {
    assert_eq!(analytic_grad.len(), point.len());
    let numeric = central_diff_grad(f, point, step);
    analytic_grad
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + 1e-12))
        .fold(0.0, f64::max)
}
