//! Exceedance counting and the Dynamic Quantile test.
//!
//! A VaR forecast is exceeded on day `t` when `y_t < -VaR_t`. The hit series
//! takes `1 - θ` on exceedances and `-θ` otherwise, so it has mean zero under
//! correct coverage. The DQ statistic regresses hits on the current VaR and
//! three lagged hits (no intercept) and scales the explained sum of squares
//! by `θ(1 - θ)`; it is asymptotically chi-square with one degree of freedom
//! per regressor.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::conv::loss::check_theta;
use crate::error::{Error, Result};
use crate::special::chi2_sf;

/// Default number of lagged hits in the DQ regression.
pub const DEFAULT_HIT_LAGS: usize = 3;

/// Eigenvalues of `X'X` below this fraction of the largest are treated as zero.
pub const PINV_RELATIVE_TOL: f64 = 1e-10;

/// Centered exceedance indicators for one forecast series.
#[derive(Debug, Clone, PartialEq)]
pub struct HitSeries {
    values: Vec<f64>,
    theta: f64,
}

impl HitSeries {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of days whose return fell below `-VaR`.
    pub fn exceedances(&self) -> usize {
        let hit = 1.0 - self.theta;
        self.values.iter().filter(|&&v| v == hit).count()
    }
}

/// Builds the hit series; equality `y = -VaR` is not an exceedance.
pub fn hits(returns: &[f64], var: &[f64], theta: f64) -> Result<HitSeries> {
    check_theta(theta)?;
    if returns.len() != var.len() {
        return Err(Error::Shape(format!(
            "{} returns against {} VaR values",
            returns.len(),
            var.len()
        )));
    }
    let values = returns
        .iter()
        .zip(var)
        .map(|(&y, &v)| if y < -v { 1.0 - theta } else { -theta })
        .collect();
    Ok(HitSeries { values, theta })
}

/// A DQ statistic with its chi-square reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DqTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Regressor columns `[VaR_t, Hit_{t-1}, .., Hit_{t-lags}]` and the aligned
/// response `Hit_t`, for every `t` whose lags all exist.
pub fn dq_design(hit: &HitSeries, var: &[f64], hit_lags: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = hit.len();
    if var.len() != n {
        return Err(Error::Shape(format!("{n} hits against {} VaR values", var.len())));
    }
    let dof = hit_lags + 1;
    if n <= hit_lags + dof {
        return Err(Error::InsufficientData(format!(
            "DQ test with {hit_lags} hit lags needs more than {} observations, got {n}",
            hit_lags + dof
        )));
    }
    let h = hit.values();
    let mut columns = Vec::with_capacity(dof);
    columns.push(var[hit_lags..].to_vec());
    for lag in 1..=hit_lags {
        columns.push(h[hit_lags - lag..n - lag].to_vec());
    }
    Ok((columns, h[hit_lags..].to_vec()))
}

/// `Hit'X (X'X)⁻ X'Hit / (θ(1 - θ))` for arbitrary regressor columns.
///
/// `(X'X)⁻` is the eigenvalue pseudo-inverse, so rank-deficient designs such
/// as a constant VaR alongside constant lagged hits still give a finite value.
/// Degrees of freedom count the columns, not the rank.
pub fn projection_statistic(columns: &[Vec<f64>], response: &[f64], theta: f64) -> Result<DqTest> {
    check_theta(theta)?;
    let p = columns.len();
    let n = response.len();
    if p == 0 {
        return Err(Error::Shape("DQ regression without regressors".into()));
    }
    if let Some(bad) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::Shape(format!("regressor of length {} against {n} hits", bad.len())));
    }
    if columns.iter().flatten().chain(response).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in DQ regression".into()));
    }

    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let y = DVector::from_column_slice(response);
    let xtx = x.tr_mul(&x);
    let xty = x.tr_mul(&y);

    let eigen = SymmetricEigen::new(xtx);
    let largest = eigen.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    let mut quad = 0.0;
    if largest > 0.0 {
        let cut = PINV_RELATIVE_TOL * largest;
        for (k, &lambda) in eigen.eigenvalues.iter().enumerate() {
            if lambda > cut {
                let proj = eigen.eigenvectors.column(k).dot(&xty);
                quad += proj * proj / lambda;
            }
        }
    }
    let statistic = (quad / (theta * (1.0 - theta))).max(0.0);
    Ok(DqTest {
        statistic,
        dof: p,
        p_value: chi2_sf(statistic, p)?,
    })
}

/// Dynamic Quantile test on a hit series and its VaR forecasts.
pub fn dq_test(hit: &HitSeries, var: &[f64], hit_lags: usize) -> Result<DqTest> {
    let (columns, response) = dq_design(hit, var, hit_lags)?;
    projection_statistic(&columns, &response, hit.theta())
}

/// Backtest summary of one forecast series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacktestResult {
    pub n: usize,
    pub exceedances: usize,
    pub exceedance_rate: f64,
    pub mean_var: f64,
    pub dq_statistic: f64,
    pub dof: usize,
    /// Forced to 0 when the series has no exceedances.
    pub p_value: f64,
}

impl BacktestResult {
    /// DQ rejection at significance `level`.
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Exceedance rate, mean VaR and DQ test for aligned returns and forecasts.
///
/// The lagged-hit rows at the start are dropped from the regression only;
/// the exceedance rate uses every day. A series without exceedances is given
/// a p-value of 0, i.e. it is always rejected.
pub fn score_forecast(returns: &[f64], var: &[f64], theta: f64) -> Result<BacktestResult> {
    let hit = hits(returns, var, theta)?;
    let dq = dq_test(&hit, var, DEFAULT_HIT_LAGS)?;
    let n = hit.len();
    let exceedances = hit.exceedances();
    Ok(BacktestResult {
        n,
        exceedances,
        exceedance_rate: exceedances as f64 / n as f64,
        mean_var: var.iter().sum::<f64>() / n as f64,
        dq_statistic: dq.statistic,
        dof: dq.dof,
        p_value: if exceedances == 0 { 0.0 } else { dq.p_value },
    })
}
