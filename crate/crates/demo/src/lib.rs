//! Browser bindings for the demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types. Errors come back as thrown strings.

use qcnn_var::backtest::{score_forecast, BacktestResult};
use qcnn_var::baselines::{constant_quantile, GarchParams};
use qcnn_var::conv::pinball_loss;
use qcnn_var::harness::{run_single, ExperimentConfig, FitSummary, Method};
use qcnn_var::rng::Philox;
use qcnn_var::synth::{simulate, true_var, Process, SimSpec, Simulation};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const DAILY_GARCH: GarchParams = GarchParams {
    omega: 2e-6,
    alpha: 0.10,
    beta: 0.85,
    mu: 0.0,
};

#[derive(Serialize)]
struct MethodOut {
    method: &'static str,
    label: &'static str,
    var: Vec<f64>,
    backtest: BacktestResult,
    fit: FitSummary,
}

#[derive(Serialize)]
struct ForecastOut {
    theta: f64,
    train_len: usize,
    returns: Vec<f64>,
    true_var: Vec<f64>,
    true_backtest: BacktestResult,
    methods: Vec<MethodOut>,
}

fn text<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn simulated(garch: bool, n: usize, seed: u32) -> Result<Simulation, String> {
    let process = if garch {
        Process::Garch11(DAILY_GARCH)
    } else {
        Process::IidNormal { mu: 0.0, sigma: 0.01 }
    };
    simulate(&SimSpec { process, length: n, seed: seed as u64 }, "demo").map_err(text)
}

fn forecasts(sim: &Simulation, theta: f64, methods: &[Method], cfg: &ExperimentConfig) -> Result<String, String> {
    let series = &sim.series;
    let split = series.split_index;
    let truth = true_var(&sim.sigma[split..], sim.mu, theta).map_err(text)?;
    let test = series.test();
    let true_backtest = score_forecast(test, &truth, theta).map_err(text)?;
    let mut out = Vec::new();
    for &m in methods {
        let run = run_single(series, theta, m, cfg).map_err(text)?;
        out.push(MethodOut {
            method: m.name(),
            label: m.label(),
            var: run.forecast.var,
            backtest: run.backtest,
            fit: run.fit,
        });
    }
    serde_json::to_string(&ForecastOut {
        theta,
        train_len: split,
        returns: test.to_vec(),
        true_var: truth,
        true_backtest,
        methods: out,
    })
    .map_err(text)
}

/// Simulates `n` daily returns, fits the historical, GARCH and linear
/// quantile baselines on the first 70% and backtests their VaR on the rest.
#[wasm_bindgen]
pub fn baseline_forecasts(garch: bool, n: u32, seed: u32, theta: f64) -> Result<String, String> {
    let sim = simulated(garch, n as usize, seed)?;
    forecasts(&sim, theta, &[Method::Constant, Method::Garch, Method::Qr], &ExperimentConfig::default())
}

#[derive(Serialize)]
struct ExplorerOut {
    theta: f64,
    sample: Vec<f64>,
    quantile: f64,
    grid: Vec<f64>,
    loss: Vec<f64>,
    grid_argmin: f64,
}

/// Pinball loss of a constant forecast across a grid, next to the
/// interpolated sample quantile. Draws come from a Student-t with 4 degrees
/// of freedom so the tails are visibly heavy.
#[wasm_bindgen]
pub fn quantile_explorer(n: u32, seed: u32, theta: f64) -> Result<String, String> {
    let mut rng = Philox::new(seed as u64);
    let sample: Vec<f64> = (0..n.max(1))
        .map(|_| {
            let z = rng.normal();
            let chi2: f64 = (0..4).map(|_| rng.normal().powi(2)).sum();
            z / (chi2 / 4.0).sqrt()
        })
        .collect();
    let quantile = constant_quantile(&sample, theta).map_err(text)?;
    let lo = sample.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let points = 241;
    let grid: Vec<f64> = (0..points).map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64).collect();
    let loss = grid
        .iter()
        .map(|&q| pinball_loss(&sample, &vec![q; sample.len()], theta))
        .collect::<Result<Vec<_>, _>>()
        .map_err(text)?;
    let best = (0..points).min_by(|&a, &b| loss[a].total_cmp(&loss[b])).unwrap_or(0);
    serde_json::to_string(&ExplorerOut {
        theta,
        sample,
        quantile,
        grid_argmin: grid[best],
        grid,
        loss,
    })
    .map_err(text)
}

/// The network configuration used in the browser: a 32-day window, three
/// hidden layers of four filters, small batches.
pub fn small_config(epochs: usize, seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model.window = 32;
    cfg.model.hidden_layers = 3;
    cfg.model.filters = 4;
    cfg.model.kernel = 2;
    cfg.train.epochs = epochs.max(1);
    cfg.train.batch_size = 64;
    cfg.experiment.seed = seed;
    cfg
}

/// Trains a small QCNN on a simulated GARCH series and compares its VaR with
/// the fitted GARCH model and the true conditional VaR.
#[wasm_bindgen]
pub fn train_small_qcnn(n: u32, seed: u32, theta: f64, epochs: u32) -> Result<String, String> {
    let sim = simulated(true, n as usize, seed)?;
    forecasts(&sim, theta, &[Method::Garch, Method::Qcnn], &small_config(epochs as usize, seed as u64))
}
