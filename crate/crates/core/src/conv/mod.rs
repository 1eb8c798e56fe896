//! The quantile convolutional network: dilated causal convolutions trained
//! on the pinball loss with exact gradients and Adadelta.

mod adadelta;
pub mod checkpoint;
mod kernels;
mod layer;
pub(crate) mod loss;
mod model;
mod train;

pub use adadelta::{adadelta_step, AdadeltaState};
pub use layer::{causal_conv_forward, Activation, ConvLayer, Signal};
pub use loss::{pinball, pinball_loss, pinball_slope};
pub use model::{Architecture, QcnnModel, Workspace};
pub use train::{batch_gradient, mean_loss, train, train_with, TrainConfig, TrainReport, Trained};

use crate::data::Scaler;
use crate::error::Result;

/// Forward pass over one input window.
pub fn forward(model: &QcnnModel, x: &[f64]) -> Result<Vec<f64>> {
    model.forward(x)
}

/// Mean pinball loss and its gradient for one `(input, target)` window.
pub fn backward(model: &QcnnModel, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    model.backward(x, y)
}

/// One-day-ahead Value at Risk from the last `window` scaled returns.
pub fn predict_var(model: &QcnnModel, recent: &[f64], scaler: &Scaler) -> Result<f64> {
    model.predict_var(recent, scaler)
}
