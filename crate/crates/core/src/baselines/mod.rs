//! Reference forecasters: historical quantile, GARCH(1,1) and linear
//! quantile autoregression.

mod constant;
mod garch;
mod linear_qr;
mod nelder_mead;

pub use constant::{constant_quantile, constant_var};
pub use garch::{
    fit_garch, garch_var, log_likelihood, normal_var, variance_path, GarchFit, GarchParams,
    MIN_GARCH_OBS,
};
pub use linear_qr::{
    fit_linear_qr, lag_design, linear_qr_var, qr_objective, quantile_regression, QrCoefficients,
    DEFAULT_LAGS, MIN_QR_OBS,
};
pub use crate::special::gaussian_quantile;
