use crate::error::{Error, Result};

/// Linear-interpolation sample quantile.
///
/// With the data sorted ascending and 1-based index `i = (N - 1)θ + 1`,
/// returns `x[⌊i⌋] + (i - ⌊i⌋)(x[⌊i⌋ + 1] - x[⌊i⌋])`.
pub fn constant_quantile(xs: &[f64], theta: f64) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::InsufficientData("quantile of an empty sample".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {theta}")));
    }
    if xs.iter().any(|x| x.is_nan()) {
        return Err(Error::Domain("sample contains NaN".into()));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(interpolate_sorted(&sorted, theta))
}

pub(crate) fn interpolate_sorted(sorted: &[f64], theta: f64) -> f64 {
    let n = sorted.len();
    let i = (n - 1) as f64 * theta + 1.0;
    let lower = i.floor();
    // 1-based index -> 0-based position
    let k = (lower as usize).clamp(1, n) - 1;
    if k + 1 >= n {
        return sorted[n - 1];
    }
    sorted[k] + (i - lower) * (sorted[k + 1] - sorted[k])
}

/// Historical-quantile VaR: the negated training-sample quantile.
pub fn constant_var(train: &[f64], theta: f64) -> Result<f64> {
    Ok(-constant_quantile(train, theta)?)
}
