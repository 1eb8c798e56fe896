use crate::error::{Error, Result};

pub(crate) fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("quantile level must lie in (0, 1), got {theta}")))
    }
}

/// Pinball loss of one residual `y - q`.
#[inline]
pub fn pinball(y: f64, q: f64, theta: f64) -> f64 {
    let r = y - q;
    if r >= 0.0 {
        theta * r
    } else {
        (theta - 1.0) * r
    }
}

/// Derivative of [`pinball`] with respect to `q`, taking the `y >= q`
/// branch at the kink.
#[inline]
pub fn pinball_slope(y: f64, q: f64, theta: f64) -> f64 {
    if y >= q {
        -theta
    } else {
        1.0 - theta
    }
}

/// Mean pinball (quantile) loss of forecasts `q` for outcomes `y`.
pub fn pinball_loss(y: &[f64], q: &[f64], theta: f64) -> Result<f64> {
    check_theta(theta)?;
    if y.len() != q.len() {
        return Err(Error::Shape(format!(
            "{} outcomes but {} forecasts",
            y.len(),
            q.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData("empty loss input".into()));
    }
    let sum: f64 = y.iter().zip(q).map(|(&y, &q)| pinball(y, q, theta)).sum();
    Ok(sum / y.len() as f64)
}
