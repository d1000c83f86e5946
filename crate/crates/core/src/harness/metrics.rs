use crate::scalar::Scalar;

/// Euclidean distance between the recommended and optimal doses in grid steps.
pub fn dose_units<T: Scalar>(d_hat: &[T], d_opt: &[T], grid_step: T) -> T {
    let ss: T = d_hat.iter().zip(d_opt).map(|(&a, &b)| (a - b) * (a - b)).sum();
    ss.sqrt() / grid_step
}

/// Root mean squared deviation of posterior draws at the recommended dose
/// from the true objective there.
pub fn rpsel<T: Scalar>(draws: &[T], truth: T) -> T {
    assert!(!draws.is_empty(), "rpsel needs at least one draw");
    let ss: T = draws.iter().map(|&f| (f - truth) * (f - truth)).sum();
    (ss / T::from_usize(draws.len()).unwrap()).sqrt()
}

pub fn abs_dev<T: Scalar>(posterior_mean: T, truth: T) -> T {
    (posterior_mean - truth).abs()
}

/// Sample quantile with linear interpolation between order statistics
/// (the default definition in R and NumPy). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
