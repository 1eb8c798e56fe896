//! Linear quantile autoregression fitted exactly with a primal-dual
//! interior-point method (Frisch-Newton with Mehrotra correction).
//!
//! The estimator minimizes `Σ ρ_θ(y_t - x_t'β)` through its dual
//! `max y'a  s.t.  X'a = (1-θ) X'1,  0 <= a <= 1`; the coefficients are the
//! negated multipliers of the equality constraints.

use serde::{Deserialize, Serialize};

use crate::conv::pinball;
use crate::error::{Error, Result};

pub const DEFAULT_LAGS: usize = 4;
pub const MIN_QR_OBS: usize = 50;

const STEP_FRACTION: f64 = 0.99995;
const GAP_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;
/// Columns whose residual after projection on earlier columns is below this
/// fraction of their norm are treated as collinear and dropped.
const COLLINEAR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrCoefficients {
    pub intercept: f64,
    /// `lag_weights[k]` multiplies the return `k + 1` days back.
    pub lag_weights: Vec<f64>,
    pub theta: f64,
}

impl QrCoefficients {
    /// Fitted quantile given the most recent returns in chronological order.
    pub fn predict(&self, recent: &[f64]) -> Result<f64> {
        if recent.len() != self.lag_weights.len() {
            return Err(Error::Shape(format!(
                "expected {} lagged returns, got {}",
                self.lag_weights.len(),
                recent.len()
            )));
        }
        Ok(self.intercept
            + self
                .lag_weights
                .iter()
                .zip(recent.iter().rev())
                .map(|(w, r)| w * r)
                .sum::<f64>())
    }

    /// In-sample fitted quantiles for `returns[lags..]`.
    pub fn fitted(&self, returns: &[f64]) -> Vec<f64> {
        let p = self.lag_weights.len();
        (p..returns.len())
            .map(|t| self.predict(&returns[t - p..t]).expect("lag count matches"))
            .collect()
    }
}

/// VaR for the next day: `-(intercept + Σ w_k r_{t-k})`.
pub fn linear_qr_var(coef: &QrCoefficients, recent: &[f64]) -> Result<f64> {
    Ok(-coef.predict(recent)?)
}

/// Solves the symmetric positive (semi)definite system `m v = rhs` by
/// Cholesky, adding a tiny ridge if roundoff breaks definiteness.
fn solve_spd(m: &[f64], rhs: &[f64], p: usize) -> Option<Vec<f64>> {
    let trace: f64 = (0..p).map(|i| m[i * p + i]).sum();
    for ridge in [0.0, 1e-14, 1e-12, 1e-10] {
        let mut l = vec![0.0; p * p];
        let mut ok = true;
        'outer: for i in 0..p {
            for j in 0..=i {
                let mut sum = m[i * p + j] + if i == j { ridge * trace } else { 0.0 };
                for k in 0..j {
                    sum -= l[i * p + k] * l[j * p + k];
                }
                if i == j {
                    if !(sum > 0.0) {
                        ok = false;
                        break 'outer;
                    }
                    l[i * p + i] = sum.sqrt();
                } else {
                    l[i * p + j] = sum / l[j * p + j];
                }
            }
        }
        if !ok {
            continue;
        }
        let mut v = rhs.to_vec();
        for i in 0..p {
            let s: f64 = (0..i).map(|k| l[i * p + k] * v[k]).sum();
            v[i] = (v[i] - s) / l[i * p + i];
        }
        for i in (0..p).rev() {
            let s: f64 = (i + 1..p).map(|k| l[k * p + i] * v[k]).sum();
            v[i] = (v[i] - s) / l[i * p + i];
        }
        return Some(v);
    }
    None
}

/// `A diag(q) A'` and `A (q ∘ r)` for `A = X'` with rows of `design`.
fn weighted_normal(design: &[Vec<f64>], q: &[f64], r: &[f64], p: usize) -> (Vec<f64>, Vec<f64>) {
    let mut m = vec![0.0; p * p];
    let mut v = vec![0.0; p];
    for ((row, &qi), &ri) in design.iter().zip(q).zip(r) {
        for a in 0..p {
            let qa = qi * row[a];
            v[a] += qa * ri;
            for b in 0..=a {
                m[a * p + b] += qa * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            m[b * p + a] = m[a * p + b];
        }
    }
    (m, v)
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(1e20, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Indices of a maximal set of linearly independent columns, scanned left to right.
fn independent_columns(design: &[Vec<f64>], p: usize) -> Vec<usize> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..p {
        let col: Vec<f64> = design.iter().map(|r| r[j]).collect();
        let norm = dot(&col, &col).sqrt();
        if norm == 0.0 {
            continue;
        }
        let mut resid = col;
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&resid, b);
                for (x, y) in resid.iter_mut().zip(b) {
                    *x -= c * y;
                }
            }
        }
        let rn = dot(&resid, &resid).sqrt();
        if rn > COLLINEAR_TOL * norm {
            basis.push(resid.iter().map(|x| x / rn).collect());
            keep.push(j);
        }
    }
    keep
}

/// Quantile regression of `response` on the rows of `design`.
///
/// Collinear columns get a zero coefficient.
pub fn quantile_regression(design: &[Vec<f64>], response: &[f64], theta: f64) -> Result<Vec<f64>> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {theta}")));
    }
    let n = response.len();
    if design.len() != n || n == 0 {
        return Err(Error::Shape(format!(
            "{} design rows for {} responses",
            design.len(),
            n
        )));
    }
    let p_full = design[0].len();
    if design.iter().any(|r| r.len() != p_full) {
        return Err(Error::Shape("ragged design matrix".into()));
    }
    let keep = independent_columns(design, p_full);
    let mut coef = vec![0.0; p_full];
    if keep.is_empty() {
        return Ok(coef);
    }
    let reduced: Vec<Vec<f64>> = design
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    let beta = frisch_newton(&reduced, response, theta)?;
    for (&j, b) in keep.iter().zip(beta) {
        coef[j] = b;
    }
    Ok(coef)
}

fn frisch_newton(design: &[Vec<f64>], response: &[f64], theta: f64) -> Result<Vec<f64>> {
    let n = response.len();
    let p = design[0].len();
    let c: Vec<f64> = response.iter().map(|v| -v).collect();
    let mut b = vec![0.0; p];
    for row in design {
        for (bj, &xj) in b.iter_mut().zip(row) {
            *bj += (1.0 - theta) * xj;
        }
    }
    let at = |y: &[f64]| -> Vec<f64> { design.iter().map(|row| dot(row, y)).collect() };

    let mut x = vec![1.0 - theta; n];
    let mut s = vec![theta; n];
    let ones = vec![1.0; n];
    let (m0, v0) = weighted_normal(design, &ones, &c, p);
    let mut y = solve_spd(&m0, &v0, p)
        .ok_or_else(|| Error::FitFailure("singular design in quantile regression".into()))?;
    let ay = at(&y);
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut r = c[i] - ay[i];
        if r == 0.0 {
            r = 0.001;
        }
        z[i] = r.max(0.0);
        w[i] = (-r).max(0.0);
    }

    let scale = 1.0 + c.iter().map(|v| v.abs()).sum::<f64>();
    let mut gap = dot(&c, &x) - dot(&y, &b) + w.iter().sum::<f64>();
    let mut iter = 0;
    let mut stalled = 0;
    while gap > GAP_TOL * scale && iter < MAX_ITER && stalled < 3 {
        iter += 1;
        let previous_gap = gap;
        let q: Vec<f64> = (0..n).map(|i| 1.0 / (z[i] / x[i] + w[i] / s[i])).collect();
        let r: Vec<f64> = (0..n).map(|i| z[i] - w[i]).collect();

        // predictor
        let (m, rhs) = weighted_normal(design, &q, &r, p);
        let mut dy = solve_spd(&m, &rhs, p)
            .ok_or_else(|| Error::FitFailure("singular normal equations".into()))?;
        let ady = at(&dy);
        let mut dx: Vec<f64> = (0..n).map(|i| q[i] * (ady[i] - r[i])).collect();
        let mut ds: Vec<f64> = dx.iter().map(|v| -v).collect();
        let mut dz: Vec<f64> = (0..n).map(|i| -z[i] * (dx[i] / x[i] + 1.0)).collect();
        let mut dw: Vec<f64> = (0..n).map(|i| -w[i] * (ds[i] / s[i] + 1.0)).collect();

        let mut fp = (STEP_FRACTION * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
        let mut fd = (STEP_FRACTION * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);

        if fp.min(fd) < 1.0 {
            // corrector
            let mu0 = dot(&z, &x) + dot(&w, &s);
            let mut g = 0.0;
            for i in 0..n {
                g += (z[i] + fd * dz[i]) * (x[i] + fp * dx[i]) + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i]);
            }
            let mu = mu0 * (g / mu0).powi(3) / (2.0 * n as f64);
            let dxdz: Vec<f64> = (0..n).map(|i| dx[i] * dz[i]).collect();
            let dsdw: Vec<f64> = (0..n).map(|i| ds[i] * dw[i]).collect();
            let extra: Vec<f64> = (0..n)
                .map(|i| mu * (1.0 / x[i] - 1.0 / s[i]) - dxdz[i] / x[i] + dsdw[i] / s[i])
                .collect();
            let target: Vec<f64> = (0..n).map(|i| r[i] - extra[i]).collect();
            let (m, rhs) = weighted_normal(design, &q, &target, p);
            dy = solve_spd(&m, &rhs, p)
                .ok_or_else(|| Error::FitFailure("singular normal equations".into()))?;
            let ady = at(&dy);
            for i in 0..n {
                dx[i] = q[i] * (ady[i] - target[i]);
                ds[i] = -dx[i];
                dz[i] = (mu - dxdz[i]) / x[i] - z[i] - z[i] / x[i] * dx[i];
                dw[i] = (mu - dsdw[i]) / s[i] - w[i] - w[i] / s[i] * ds[i];
            }
            fp = (STEP_FRACTION * max_step(&x, &dx).min(max_step(&s, &ds))).min(1.0);
            fd = (STEP_FRACTION * max_step(&w, &dw).min(max_step(&z, &dz))).min(1.0);
        }

        for i in 0..n {
            x[i] += fp * dx[i];
            s[i] += fp * ds[i];
            z[i] += fd * dz[i];
            w[i] += fd * dw[i];
        }
        for (yj, d) in y.iter_mut().zip(&dy) {
            *yj += fd * d;
        }
        gap = dot(&c, &x) - dot(&y, &b) + w.iter().sum::<f64>();
        if !gap.is_finite() {
            return Err(Error::FitFailure("interior-point iterates became non-finite".into()));
        }
        // roundoff floor reached
        if gap < 1e-6 * scale && gap > 0.5 * previous_gap {
            stalled += 1;
        } else {
            stalled = 0;
        }
    }
    if gap > 1e-6 * scale {
        return Err(Error::FitFailure(format!(
            "quantile regression did not converge: duality gap {gap:e} after {iter} iterations"
        )));
    }
    Ok(y.iter().map(|v| -v).collect())
}

/// Lagged design `[1, r_{t-1}, ..., r_{t-lags}]` and response `r_t` for `t >= lags`.
pub fn lag_design(returns: &[f64], lags: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let rows = (lags..returns.len())
        .map(|t| {
            std::iter::once(1.0)
                .chain((1..=lags).map(|k| returns[t - k]))
                .collect()
        })
        .collect();
    (rows, returns[lags.min(returns.len())..].to_vec())
}

/// Fits the `theta`-quantile autoregression with an intercept and `lags` lags.
pub fn fit_linear_qr(train: &[f64], theta: f64, lags: usize) -> Result<QrCoefficients> {
    if train.len() < MIN_QR_OBS.max(lags + 1) {
        return Err(Error::InsufficientData(format!(
            "quantile autoregression needs at least {} observations, got {}",
            MIN_QR_OBS.max(lags + 1),
            train.len()
        )));
    }
    if train.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("non-finite return in quantile regression input".into()));
    }
    // Regression quantiles are equivariant under positive rescaling of the
    // series; work in unit-scale data to keep tolerances meaningful.
    let (_, var) = super::garch::mean_var(train);
    let scale = if var > 0.0 {
        var.sqrt()
    } else {
        train.iter().fold(0.0f64, |m, r| m.max(r.abs())).max(1.0)
    };
    let scaled: Vec<f64> = train.iter().map(|r| r / scale).collect();
    let (design, response) = lag_design(&scaled, lags);
    let beta = quantile_regression(&design, &response, theta)?;
    Ok(QrCoefficients {
        intercept: beta[0] * scale,
        lag_weights: beta[1..].to_vec(),
        theta,
    })
}

/// Mean pinball loss of the autoregression on `returns`.
pub fn qr_objective(coef: &QrCoefficients, returns: &[f64]) -> f64 {
    let lags = coef.lag_weights.len();
    let fitted = coef.fitted(returns);
    let n = fitted.len() as f64;
    returns[lags..]
        .iter()
        .zip(&fitted)
        .map(|(&y, &q)| pinball(y, q, coef.theta))
        .sum::<f64>()
        / n
}
