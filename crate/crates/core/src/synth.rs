//! Simulated return processes whose conditional quantiles are known.
//!
//! Draws come from [`Philox`], so a `(spec, seed)` pair gives the same
//! series on every platform. Simulated series can be written in the price
//! CSV layout that [`crate::data::load_prices`] reads, with the true
//! conditional standard deviation as an extra column.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};

use crate::baselines::GarchParams;
use crate::data::ReturnSeries;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Philox};
use crate::special::gaussian_quantile;

/// Price at the first row of an exported series.
pub const START_PRICE: f64 = 100.0;

/// Date of the first exported row (a Monday).
pub fn start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Process {
    IidNormal { mu: f64, sigma: f64 },
    Garch11(GarchParams),
}

impl Process {
    pub fn name(&self) -> &'static str {
        match self {
            Process::IidNormal { .. } => "iid_normal",
            Process::Garch11(_) => "garch11",
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Process::IidNormal { mu, .. } => mu,
            Process::Garch11(p) => p.mu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub process: Process,
    pub length: usize,
    pub seed: u64,
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::Domain(format!(
                "simulated series needs length >= 2, got {}",
                self.length
            )));
        }
        match self.process {
            Process::IidNormal { mu, sigma } => {
                if !(mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::Domain(format!(
                        "iid normal needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
                    )));
                }
                Ok(())
            }
            Process::Garch11(p) => p.validate(),
        }
    }
}

/// A simulated series with the conditional standard deviation of each return.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub series: ReturnSeries,
    pub sigma: Vec<f64>,
    pub mu: f64,
}

/// Simulates `spec.length` returns.
///
/// GARCH paths start at the unconditional variance and follow the same
/// recursion as [`crate::baselines::variance_path`].
pub fn simulate(spec: &SimSpec, asset_id: &str) -> Result<Simulation> {
    spec.validate()?;
    let n = spec.length;
    let mut rng = Philox::new(spec.seed);
    let mut returns = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    match spec.process {
        Process::IidNormal { mu, sigma: s } => {
            for _ in 0..n {
                returns.push(mu + s * rng.normal());
                sigma.push(s);
            }
        }
        Process::Garch11(p) => {
            let mut s2 = p.unconditional_variance();
            for _ in 0..n {
                let s = s2.sqrt();
                let r = p.mu + s * rng.normal();
                returns.push(r);
                sigma.push(s);
                s2 = p.next_variance(r - p.mu, s2);
            }
        }
    }
    let dates = business_days(start_date(), n + 1)[1..].to_vec();
    Ok(Simulation {
        series: ReturnSeries::new(asset_id, dates, returns)?,
        sigma,
        mu: spec.process.mean(),
    })
}

/// Oracle VaR `-(μ + σ_t z_θ)` for each step.
pub fn true_var(sigma: &[f64], mu: f64, theta: f64) -> Result<Vec<f64>> {
    let z = gaussian_quantile(theta)?;
    Ok(sigma.iter().map(|s| -(mu + s * z)).collect())
}

/// `n` consecutive weekdays starting at `from` (or the next weekday).
pub fn business_days(from: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = from;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

/// Price CSV for a simulation: `date,close,sigma`, one more row than returns.
///
/// The first row has an empty sigma; row `t + 1` carries the conditional
/// standard deviation of return `t`.
pub fn to_csv(sim: &Simulation) -> String {
    let series = &sim.series;
    let mut out = String::from("date,close,sigma\n");
    let first = business_days(start_date(), 1)[0];
    let mut log_price = START_PRICE.ln();
    let _ = writeln!(out, "{first},{:?},", START_PRICE);
    for ((date, r), s) in series.dates.iter().zip(&series.returns).zip(&sim.sigma) {
        log_price += r;
        let _ = writeln!(out, "{date},{:?},{:?}", log_price.exp(), s);
    }
    out
}

/// Writes a simulation as `<dir>/<asset_id>.csv` and returns the path.
pub fn write_csv(sim: &Simulation, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(format!("{}.csv", sim.series.asset_id));
    fs::write(&path, to_csv(sim)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Asset id of the `i`-th member of a simulated panel.
pub fn panel_asset_id(i: usize) -> String {
    format!("sim_{i:03}")
}

/// `assets` independent draws of one process, seeded from `spec.seed` and the asset index.
pub fn simulate_panel(spec: &SimSpec, assets: usize) -> Result<Vec<Simulation>> {
    (0..assets)
        .map(|i| {
            let member = SimSpec {
                seed: derive_seed(spec.seed, &[i as u64]),
                ..*spec
            };
            simulate(&member, &panel_asset_id(i))
        })
        .collect()
}

/// Writes every member's CSV plus `manifest.txt` listing them; returns the manifest path.
pub fn write_panel(sims: &[Simulation], dir: &Path) -> Result<PathBuf> {
    let mut manifest = String::new();
    for sim in sims {
        let path = write_csv(sim, dir)?;
        let name = path.file_name().expect("file name").to_string_lossy();
        manifest.push_str(&name);
        manifest.push('\n');
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
