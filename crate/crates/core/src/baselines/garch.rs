//! GARCH(1,1) with Gaussian innovations and a constant mean.
//!
//! `r_t = μ + ε_t`, `σ²_{t+1} = ω + α ε²_t + β σ²_t`. Fitting fixes μ at the
//! training mean, starts the recursion at the unconditional variance
//! `ω / (1 - α - β)` of the candidate parameters and maximizes the Gaussian log-likelihood over `(ω, α, β)` with Nelder-Mead
//! in an unconstrained parameterization:
//! `(ln(ω / (1 - α - β)), logit(α + β), logit(α / (α + β)))`.
//!
//! With `α = 0` the variance is then constant at `ω / (1 - β)` whatever `β`
//! is, so the level stays identified even though `β` is not. The optimizer
//! starts at `ω = 0.05 var`, `α = 0.05`, `β = 0.90`, whose unconditional
//! variance is the training variance.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::nelder_mead::{self, Options};
use crate::error::{Error, Result};
use crate::special::gaussian_quantile;

pub const MIN_GARCH_OBS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
}

impl GarchParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.omega > 0.0
            && self.omega.is_finite()
            && self.alpha >= 0.0
            && self.beta >= 0.0
            && self.alpha + self.beta < 1.0
            && self.mu.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "GARCH(1,1) needs omega > 0, alpha, beta >= 0 and alpha + beta < 1, got {self:?}"
            )))
        }
    }

    /// `ω / (1 - α - β)`.
    pub fn unconditional_variance(&self) -> f64 {
        self.omega / (1.0 - self.alpha - self.beta)
    }

    #[inline]
    pub fn next_variance(&self, eps: f64, sigma2: f64) -> f64 {
        self.omega + self.alpha * eps * eps + self.beta * sigma2
    }
}

/// Conditional variances `σ²_1 .. σ²_{n+1}` for `n` returns, starting at `sigma2_init`.
pub fn variance_path(params: &GarchParams, returns: &[f64], sigma2_init: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(returns.len() + 1);
    let mut s2 = sigma2_init;
    out.push(s2);
    for &r in returns {
        s2 = params.next_variance(r - params.mu, s2);
        out.push(s2);
    }
    out
}

/// Gaussian log-likelihood `-½ Σ (ln 2π + ln σ²_t + ε²_t / σ²_t)`.
pub fn log_likelihood(params: &GarchParams, returns: &[f64], sigma2_init: f64) -> f64 {
    let ln2pi = (2.0 * PI).ln();
    let mut s2 = sigma2_init;
    let mut ll = 0.0;
    for &r in returns {
        let eps = r - params.mu;
        if !(s2 > 0.0) {
            return f64::NEG_INFINITY;
        }
        ll -= 0.5 * (ln2pi + s2.ln() + eps * eps / s2);
        s2 = params.next_variance(eps, s2);
    }
    ll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    /// Variance that starts the recursion (the fitted unconditional variance).
    pub sigma2_init: f64,
    pub log_likelihood: f64,
    /// Log-likelihood at the starting point of the optimizer.
    pub initial_log_likelihood: f64,
    pub evaluations: usize,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn decode(z: &[f64], mu: f64) -> GarchParams {
    let persistence = logistic(z[1]);
    let share = logistic(z[2]);
    GarchParams {
        omega: z[0].exp() * (1.0 - persistence),
        alpha: persistence * share,
        beta: persistence * (1.0 - share),
        mu,
    }
}

/// Sample mean and population variance.
pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Maximum-likelihood GARCH(1,1) on a training segment.
pub fn fit_garch(train: &[f64]) -> Result<GarchFit> {
    if train.len() < MIN_GARCH_OBS {
        return Err(Error::InsufficientData(format!(
            "GARCH needs at least {MIN_GARCH_OBS} observations, got {}",
            train.len()
        )));
    }
    if train.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("non-finite return in GARCH input".into()));
    }
    let (mu, var) = mean_var(train);
    if !(var > 0.0) || train.iter().all(|&r| r == train[0]) {
        return Err(Error::Degenerate("GARCH input has zero variance".into()));
    }

    let start = GarchParams {
        omega: 0.05 * var,
        alpha: 0.05,
        beta: 0.90,
        mu,
    };
    let z0 = [
        start.unconditional_variance().ln(),
        logit(start.alpha + start.beta),
        logit(start.alpha / (start.alpha + start.beta)),
    ];
    let initial_log_likelihood = log_likelihood(&start, train, var);

    let mut objective = |z: &[f64]| {
        let p = decode(z, mu);
        if !(p.omega > 0.0) || p.alpha + p.beta >= 1.0 || !p.omega.is_finite() {
            return f64::INFINITY;
        }
        -log_likelihood(&p, train, p.unconditional_variance())
    };

    let opts = Options {
        max_evals: 3000,
        ftol: 1e-12,
        initial_step: 0.5,
    };
    let mut best = nelder_mead::minimize(&mut objective, &z0, opts);
    let mut evals = best.evals;
    // Restart from the incumbent until a fresh simplex stops improving.
    for _ in 0..6 {
        let again = nelder_mead::minimize(
            &mut objective,
            &best.x,
            Options {
                initial_step: 0.1,
                ..opts
            },
        );
        evals += again.evals;
        let improved = again.value < best.value - 1e-9 * (1.0 + best.value.abs());
        if again.value <= best.value {
            best = again;
        }
        if !improved {
            break;
        }
    }

    if !best.converged {
        log::debug!("GARCH search stopped at the evaluation limit after {evals} evaluations");
    }
    let params = decode(&best.x, mu);
    let ll = -best.value;
    if !ll.is_finite() || params.validate().is_err() {
        return Err(Error::FitFailure(format!(
            "GARCH optimizer ended outside the feasible region: {params:?}, log-likelihood {ll}, \
             {evals} evaluations"
        )));
    }
    if ll < initial_log_likelihood {
        return Err(Error::FitFailure(format!(
            "GARCH optimizer ended below its starting log-likelihood ({ll} < {initial_log_likelihood})"
        )));
    }
    Ok(GarchFit {
        params,
        sigma2_init: params.unconditional_variance(),
        log_likelihood: ll,
        initial_log_likelihood,
        evaluations: evals,
    })
}

/// VaR from a mean and conditional standard deviation: `-(μ + σ z_θ)`.
pub fn normal_var(mu: f64, sigma: f64, theta: f64) -> Result<f64> {
    Ok(-(mu + sigma * gaussian_quantile(theta)?))
}

impl GarchFit {
    /// One-day-ahead VaR after observing `history`, which must start where
    /// the fitted recursion started (the first training return).
    pub fn var_after(&self, history: &[f64], theta: f64) -> Result<f64> {
        if history.is_empty() {
            return Err(Error::InsufficientData("GARCH forecast needs at least one return".into()));
        }
        let s2 = variance_path(&self.params, history, self.sigma2_init)[history.len()];
        normal_var(self.params.mu, s2.sqrt(), theta)
    }

    /// VaR for every day `t` in `from..returns.len()`, each using returns before `t` only.
    pub fn rolling_var(&self, returns: &[f64], from: usize, theta: f64) -> Result<Vec<f64>> {
        if from == 0 {
            return Err(Error::InsufficientData("GARCH forecast needs at least one return".into()));
        }
        let z = gaussian_quantile(theta)?;
        let path = variance_path(&self.params, &returns[..returns.len().saturating_sub(1)], self.sigma2_init);
        Ok((from..returns.len())
            .map(|t| -(self.params.mu + path[t].sqrt() * z))
            .collect())
    }
}

/// `garch_var(fit, history, θ)`: VaR for the day after `history`.
pub fn garch_var(fit: &GarchFit, history: &[f64], theta: f64) -> Result<f64> {
    fit.var_after(history, theta)
}
