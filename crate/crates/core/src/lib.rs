//! One-day-ahead Value at Risk from quantile convolutional networks.
//!
//! The crate covers the whole experiment pipeline:
//!
//! - [`data`]: price CSV ingestion, log returns, the 70/30 split, scaling and windowing
//! - [`conv`]: the dilated causal network, pinball loss, gradients, Adadelta and training
//! - [`baselines`]: historical quantile, GARCH(1,1) and linear quantile autoregression
//! - [`backtest`]: exceedances and the Dynamic Quantile test
//! - [`synth`]: simulated return panels with known conditional quantiles
//! - [`harness`]: per-asset and pooled experiments, aggregation and report files
//!
//! VaR is reported as a positive loss: for quantile level `theta` of the
//! return distribution, `VaR = -q_theta`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod baselines;
pub mod conv;
pub mod data;
mod error;
pub mod harness;
pub mod rng;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
