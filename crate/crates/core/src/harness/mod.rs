//! The comparison experiment: every method on every sampled asset, for each
//! quantile level, with rolling one-step forecasts over the test segment.
//!
//! All methods are fit once on the training segment. Forecasts for test day
//! `t` read returns before `t` only. Per-asset tasks run on the ambient rayon
//! pool when the `parallel` feature is on; results are collected in task
//! order, so reports do not depend on scheduling.

mod config;
mod report;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub use config::{DataSection, ExperimentConfig, ExperimentSection, ModelSection, TrainSection};
pub use report::{
    read_method_csv, rebuild_summaries, summary_text, theta_label, write_report, ReportFiles,
};

use crate::backtest::{score_forecast, BacktestResult};
use crate::baselines::{constant_var, fit_garch, fit_linear_qr, linear_qr_var, GarchParams};
use crate::conv::{train, QcnnModel, TrainReport, Trained};
use crate::data::{fit_scaler, load_manifest, load_prices, log_returns, make_windows, ReturnSeries, Scaler, WindowSet};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Philox};

const TAG_SAMPLE: u64 = 1;
const TAG_SINGLE: u64 = 2;
const TAG_JOINT: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Constant,
    Garch,
    Qr,
    Qcnn,
    JointQcnn,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Constant,
        Method::Garch,
        Method::Qr,
        Method::Qcnn,
        Method::JointQcnn,
    ];

    /// Identifier used in configs, flags and file names.
    pub fn name(self) -> &'static str {
        match self {
            Method::Constant => "constant",
            Method::Garch => "garch",
            Method::Qr => "qr",
            Method::Qcnn => "qcnn",
            Method::JointQcnn => "joint_qcnn",
        }
    }

    /// Row label in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Constant => "Constant",
            Method::Garch => "GARCH",
            Method::Qr => "QR",
            Method::Qcnn => "QCNN",
            Method::JointQcnn => "Joint QCNN",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!("unknown method `{s}` (expected one of {})", known.join(", ")))
            })
    }
}

/// Positive VaR numbers aligned with the test days of one asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarForecast {
    pub asset_id: String,
    pub method: Method,
    pub theta: f64,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub var: Vec<f64>,
}

/// What was estimated for one asset, kept for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitSummary {
    Constant {
        var: f64,
    },
    Garch {
        params: GarchParams,
        sigma2_init: f64,
        log_likelihood: f64,
        evaluations: usize,
    },
    Qr {
        intercept: f64,
        lag_weights: Vec<f64>,
    },
    Qcnn {
        scaler: Scaler,
        initial_loss: f64,
        final_loss: f64,
        steps: usize,
    },
}

impl FitSummary {
    fn qcnn(scaler: Scaler, report: &TrainReport) -> Self {
        FitSummary::Qcnn {
            scaler,
            initial_loss: report.initial_loss,
            final_loss: report.final_loss,
            steps: report.steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetRun {
    pub forecast: VarForecast,
    pub backtest: BacktestResult,
    pub fit: FitSummary,
}

fn asset_tag(asset_id: &str) -> u64 {
    // FNV-1a, so seeds follow the asset rather than its position in a sample
    asset_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Training seed of the single-asset network for `asset_id` at `theta`.
pub fn single_seed(seed: u64, asset_id: &str, theta: f64) -> u64 {
    derive_seed(seed, &[TAG_SINGLE, asset_tag(asset_id), theta.to_bits()])
}

/// Training seed of the pooled network at `theta`.
pub fn joint_seed(seed: u64, theta: f64) -> u64 {
    derive_seed(seed, &[TAG_JOINT, theta.to_bits()])
}

/// Rolling network VaR for every test day, each from the `window` returns before it.
pub fn qcnn_forecast(model: &QcnnModel, scaler: &Scaler, series: &ReturnSeries) -> Result<Vec<f64>> {
    let w = model.window;
    let split = series.split_index;
    if split < w {
        return Err(Error::InsufficientData(format!(
            "{}: {split} training returns cannot fill a {w}-step window",
            series.asset_id
        )));
    }
    (split..series.len())
        .map(|t| model.predict_var(&scaler.apply_all(&series.returns[t - w..t]), scaler))
        .collect()
}

/// Rolling linear-QR VaR for every test day.
pub fn qr_forecast(coef: &crate::baselines::QrCoefficients, series: &ReturnSeries) -> Result<Vec<f64>> {
    let lags = coef.lag_weights.len();
    (series.split_index..series.len())
        .map(|t| linear_qr_var(coef, &series.returns[t - lags..t]))
        .collect()
}

fn windows_for(series: &ReturnSeries, cfg: &ExperimentConfig) -> Result<(Scaler, WindowSet)> {
    let scaler = fit_scaler(series)?;
    let windows = make_windows(series, &scaler, cfg.model.window, cfg.data.stride)?;
    Ok((scaler, windows))
}

/// Trains the single-asset network on one asset's training windows.
pub fn fit_single_qcnn(series: &ReturnSeries, theta: f64, cfg: &ExperimentConfig) -> Result<(Scaler, Trained)> {
    let (scaler, windows) = windows_for(series, cfg)?;
    let trained = train(&windows, theta, &cfg.train_config(single_seed(cfg.experiment.seed, &series.asset_id, theta)))?;
    Ok((scaler, trained))
}

fn scored(series: &ReturnSeries, method: Method, theta: f64, var: Vec<f64>, fit: FitSummary) -> Result<AssetRun> {
    let backtest = score_forecast(series.test(), &var, theta)?;
    Ok(AssetRun {
        forecast: VarForecast {
            asset_id: series.asset_id.clone(),
            method,
            theta,
            dates: series.test_dates().to_vec(),
            returns: series.test().to_vec(),
            var,
        },
        backtest,
        fit,
    })
}

/// Fits one per-asset method, forecasts the test segment and backtests it.
pub fn run_single(series: &ReturnSeries, theta: f64, method: Method, cfg: &ExperimentConfig) -> Result<AssetRun> {
    let split = series.split_index;
    if split == 0 || split >= series.len() {
        return Err(Error::InsufficientData(format!(
            "{}: needs both a training and a test segment",
            series.asset_id
        )));
    }
    let train_part = series.train();
    let test_len = series.len() - split;
    let (var, fit) = match method {
        Method::Constant => {
            let v = constant_var(train_part, theta)?;
            (vec![v; test_len], FitSummary::Constant { var: v })
        }
        Method::Garch => {
            let fit = fit_garch(train_part)?;
            let var = fit.rolling_var(&series.returns, split, theta)?;
            let summary = FitSummary::Garch {
                params: fit.params,
                sigma2_init: fit.sigma2_init,
                log_likelihood: fit.log_likelihood,
                evaluations: fit.evaluations,
            };
            (var, summary)
        }
        Method::Qr => {
            let coef = fit_linear_qr(train_part, theta, cfg.model.qr_lags)?;
            let var = qr_forecast(&coef, series)?;
            let summary = FitSummary::Qr {
                intercept: coef.intercept,
                lag_weights: coef.lag_weights.clone(),
            };
            (var, summary)
        }
        Method::Qcnn => {
            let (scaler, trained) = fit_single_qcnn(series, theta, cfg)?;
            let var = qcnn_forecast(&trained.model, &scaler, series)?;
            (var, FitSummary::qcnn(scaler, &trained.report))
        }
        Method::JointQcnn => {
            return Err(Error::Config(
                "the joint network is trained across assets; use run_joint_qcnn".into(),
            ))
        }
    };
    scored(series, method, theta, var, fit)
}

/// A pooled network and its per-asset outcomes, aligned with the input assets.
#[derive(Debug)]
pub struct JointRun {
    pub trained: Trained,
    pub runs: Vec<Result<AssetRun>>,
}

/// Trains one network on the pooled training windows of all assets, each
/// scaled by its own scaler, then forecasts every asset with it.
///
/// Assets whose windows cannot be built are left out of the pool and carry
/// their error in `runs`.
pub fn run_joint_qcnn(assets: &[ReturnSeries], theta: f64, cfg: &ExperimentConfig) -> Result<JointRun> {
    if assets.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "the joint network needs at least 2 assets, got {}",
            assets.len()
        )));
    }
    let prepared: Vec<Result<(Scaler, WindowSet)>> = assets.iter().map(|a| windows_for(a, cfg)).collect();
    let pool = WindowSet::pooled(prepared.iter().filter_map(|p| p.as_ref().ok()).map(|(_, w)| w.clone()));
    let trained = train(&pool, theta, &cfg.train_config(joint_seed(cfg.experiment.seed, theta)))?;
    let runs = assets
        .iter()
        .zip(prepared)
        .map(|(series, prep)| {
            let (scaler, _) = prep?;
            let var = qcnn_forecast(&trained.model, &scaler, series)?;
            scored(series, Method::JointQcnn, theta, var, FitSummary::qcnn(scaler, &trained.report))
        })
        .collect();
    Ok(JointRun { trained, runs })
}

/// The per-asset numbers that enter a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetScore {
    pub asset_id: String,
    pub exceedance_rate: f64,
    pub dq_stat: f64,
    pub p_value: f64,
    pub mean_var: f64,
}

impl AssetScore {
    pub fn from_run(run: &AssetRun) -> Self {
        Self {
            asset_id: run.forecast.asset_id.clone(),
            exceedance_rate: run.backtest.exceedance_rate,
            dq_stat: run.backtest.dq_statistic,
            p_value: run.backtest.p_value,
            mean_var: run.backtest.mean_var,
        }
    }
}

/// Significance levels of the DQ rejection columns.
pub const REJECTION_LEVELS: [f64; 2] = [0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub assets: usize,
    pub exceedance_mean: f64,
    pub exceedance_median: f64,
    /// Population standard deviation across assets.
    pub exceedance_sd: f64,
    pub reject_01: f64,
    pub reject_05: f64,
    /// Mean over assets of each asset's mean VaR.
    pub mean_var: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub theta: f64,
    pub rows: Vec<SummaryRow>,
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Cross-asset statistics per method. A method without any scored asset
/// keeps its row with `assets = 0` and NaN statistics.
pub fn aggregate(theta: f64, methods: &[Method], scores: &[(Method, AssetScore)]) -> SummaryTable {
    let rows = methods
        .iter()
        .map(|&method| {
            let of: Vec<&AssetScore> = scores.iter().filter(|(m, _)| *m == method).map(|(_, s)| s).collect();
            let n = of.len() as f64;
            let rates: Vec<f64> = of.iter().map(|s| s.exceedance_rate).collect();
            let mean = rates.iter().sum::<f64>() / n;
            let sd = (rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
            let reject = |level: f64| of.iter().filter(|s| s.p_value < level).count() as f64 / n;
            SummaryRow {
                method,
                assets: of.len(),
                exceedance_mean: mean,
                exceedance_median: median(&rates),
                exceedance_sd: sd,
                reject_01: reject(REJECTION_LEVELS[0]),
                reject_05: reject(REJECTION_LEVELS[1]),
                mean_var: of.iter().map(|s| s.mean_var).sum::<f64>() / n,
            }
        })
        .collect();
    SummaryTable { theta, rows }
}

/// An (asset, method, θ) task that produced no forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub theta: f64,
    pub method: Method,
    pub asset_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub path: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct ThetaResults {
    pub theta: f64,
    /// Successful runs, grouped by method in config order, assets in sample order.
    pub runs: Vec<AssetRun>,
    pub failures: Vec<Failure>,
    pub joint_model: Option<QcnnModel>,
    pub summary: SummaryTable,
}

#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub assets: Vec<String>,
    pub skipped: Vec<Skipped>,
    pub results: Vec<ThetaResults>,
}

/// Seeded draw of `k` manifest entries, returned in manifest order.
pub fn sample_indices(total: usize, k: Option<usize>, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..total).collect();
    match k {
        Some(k) if k < total => {
            Philox::new(derive_seed(seed, &[TAG_SAMPLE])).shuffle(&mut idx);
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
        _ => idx,
    }
}

/// Loads the sampled assets. Unreadable files are errors; assets whose
/// training segment cannot fill one window are skipped with a warning.
pub fn load_assets(cfg: &ExperimentConfig) -> Result<(Vec<ReturnSeries>, Vec<Skipped>)> {
    let paths = load_manifest(&cfg.data.manifest)?;
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: manifest lists no assets",
            cfg.data.manifest.display()
        )));
    }
    if let Some(k) = cfg.data.sample_size {
        if k > paths.len() {
            log::warn!("sample size {k} exceeds the {} listed assets; using all", paths.len());
        }
    }
    let need = cfg.model.window + 1;
    let mut assets = Vec::new();
    let mut skipped = Vec::new();
    for i in sample_indices(paths.len(), cfg.data.sample_size, cfg.experiment.seed) {
        let path = &paths[i];
        let series = log_returns(&load_prices(path)?)?;
        if series.train().len() < need {
            let reason = format!("training segment has {} returns, need {need}", series.train().len());
            log::warn!("skipping {}: {reason}", series.asset_id);
            skipped.push(Skipped {
                path: path.display().to_string(),
                reason,
            });
            continue;
        }
        if let Some(prev) = assets.iter().find(|a: &&ReturnSeries| a.asset_id == series.asset_id) {
            return Err(Error::Config(format!("asset id `{}` appears twice in the manifest", prev.asset_id)));
        }
        assets.push(series);
    }
    Ok((assets, skipped))
}

#[cfg(feature = "parallel")]
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
fn join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    rayon::join(a, b)
}

#[cfg(not(feature = "parallel"))]
fn join<A: Send, B: Send>(a: impl FnOnce() -> A + Send, b: impl FnOnce() -> B + Send) -> (A, B) {
    (a(), b())
}

/// Runs every configured method at one quantile level.
pub fn run_theta(assets: &[ReturnSeries], theta: f64, cfg: &ExperimentConfig) -> ThetaResults {
    let methods = &cfg.experiment.methods;
    let tasks: Vec<(Method, usize)> = methods
        .iter()
        .filter(|m| **m != Method::JointQcnn)
        .flat_map(|&m| (0..assets.len()).map(move |i| (m, i)))
        .collect();
    let want_joint = methods.contains(&Method::JointQcnn);

    let (single, joint) = join(
        || par_map(&tasks, |&(m, i)| run_single(&assets[i], theta, m, cfg)),
        || want_joint.then(|| run_joint_qcnn(assets, theta, cfg)),
    );

    type Outcomes = Vec<(Method, Vec<(String, Result<AssetRun>)>)>;
    let mut by_method: Outcomes = methods.iter().map(|&m| (m, Vec::new())).collect();
    let slot = |m: Method, v: &mut Outcomes| v.iter().position(|(k, _)| *k == m).expect("configured method");
    for ((m, i), r) in tasks.iter().zip(single) {
        let s = slot(*m, &mut by_method);
        by_method[s].1.push((assets[*i].asset_id.clone(), r));
    }
    let mut joint_model = None;
    if let Some(joint) = joint {
        let s = slot(Method::JointQcnn, &mut by_method);
        match joint {
            Ok(j) => {
                for (a, r) in assets.iter().zip(j.runs) {
                    by_method[s].1.push((a.asset_id.clone(), r));
                }
                joint_model = Some(j.trained.model);
            }
            Err(e) => {
                let msg = e.to_string();
                for a in assets {
                    by_method[s].1.push((a.asset_id.clone(), Err(Error::FitFailure(msg.clone()))));
                }
            }
        }
    }

    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (method, outcomes) in by_method {
        for (asset_id, r) in outcomes {
            match r {
                Ok(run) => runs.push(run),
                Err(e) => {
                    log::warn!("{method} at theta {theta} failed for {asset_id}: {e}");
                    failures.push(Failure {
                        theta,
                        method,
                        asset_id,
                        error: e.to_string(),
                    });
                }
            }
        }
    }
    let scores: Vec<(Method, AssetScore)> = runs.iter().map(|r| (r.forecast.method, AssetScore::from_run(r))).collect();
    let summary = aggregate(theta, methods, &scores);
    ThetaResults {
        theta,
        runs,
        failures,
        joint_model,
        summary,
    }
}

/// Loads the assets and runs every quantile level.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let (assets, skipped) = load_assets(cfg)?;
    if assets.is_empty() {
        return Err(Error::InsufficientData("no asset has enough training data".into()));
    }
    let results = cfg
        .experiment
        .thetas
        .iter()
        .map(|&theta| run_theta(&assets, theta, cfg))
        .collect();
    Ok(Experiment {
        config: cfg.clone(),
        assets: assets.iter().map(|a| a.asset_id.clone()).collect(),
        skipped,
        results,
    })
}
