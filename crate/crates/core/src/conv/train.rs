use serde::{Deserialize, Serialize};

use super::adadelta::AdadeltaState;
use super::model::{Architecture, QcnnModel, Workspace};
use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Philox};

/// Windows per gradient chunk. Chunk sums are added in chunk order, so
/// results do not depend on how many threads evaluate the chunks.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub rho: f64,
    pub epsilon: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 128,
            batch_size: 128,
            seed: 0,
            rho: 0.95,
            epsilon: 1e-6,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        self.architecture.validate()?;
        AdadeltaState::new(0, self.rho, self.epsilon).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean pinball loss over all windows at initialization.
    pub initial_loss: f64,
    /// Mean pinball loss over all windows after the last epoch.
    pub final_loss: f64,
    /// Average minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: QcnnModel,
    pub report: TrainReport,
}

fn chunk_gradient(
    model: &QcnnModel,
    windows: &WindowSet,
    idx: &[usize],
    scale: f64,
) -> (f64, Vec<f64>) {
    let mut ws = Workspace::new(model);
    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for &i in idx {
        loss += ws.accumulate_gradient(model, &windows.inputs[i], &windows.targets[i], scale, &mut grad);
    }
    (loss, grad)
}

/// Gradient of the mean pinball loss over the windows in `batch`; returns
/// `(mean loss, gradient)`.
pub fn batch_gradient(model: &QcnnModel, windows: &WindowSet, batch: &[usize]) -> (f64, Vec<f64>) {
    let elements = (batch.len() * model.window) as f64;
    let scale = 1.0 / elements;
    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();

    #[cfg(feature = "parallel")]
    let parts: Vec<(f64, Vec<f64>)> = {
        use rayon::prelude::*;
        chunks
            .par_iter()
            .map(|c| chunk_gradient(model, windows, c, scale))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<(f64, Vec<f64>)> = chunks
        .iter()
        .map(|c| chunk_gradient(model, windows, c, scale))
        .collect();

    let mut grad = vec![0.0; model.param_count()];
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (loss / elements, grad)
}

/// Mean pinball loss of `model` over every window in the set.
pub fn mean_loss(model: &QcnnModel, windows: &WindowSet) -> f64 {
    let eval = |range: std::ops::Range<usize>| {
        let mut ws = Workspace::new(model);
        let mut sum = 0.0;
        for i in range {
            let q = ws.forward(model, &windows.inputs[i]);
            sum += windows.targets[i]
                .iter()
                .zip(q)
                .map(|(&y, &q)| super::loss::pinball(y, q, model.theta))
                .sum::<f64>();
        }
        sum
    };
    let n = windows.len();
    let ranges: Vec<_> = (0..n).step_by(CHUNK * 16).map(|s| s..(s + CHUNK * 16).min(n)).collect();
    #[cfg(feature = "parallel")]
    let parts: Vec<f64> = {
        use rayon::prelude::*;
        ranges.into_par_iter().map(eval).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<f64> = ranges.into_iter().map(eval).collect();
    parts.iter().sum::<f64>() / (n * model.window) as f64
}

/// Trains a network for quantile `theta` with minibatch Adadelta.
///
/// Initialization uses `derive_seed(cfg.seed, [0])`; the shuffle of epoch
/// `e` uses `derive_seed(cfg.seed, [1, e])`. A final partial batch is kept.
pub fn train(windows: &WindowSet, theta: f64, cfg: &TrainConfig) -> Result<Trained> {
    train_with(windows, theta, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch with `(epoch, mean batch loss)`.
pub fn train_with(
    windows: &WindowSet,
    theta: f64,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<Trained> {
    cfg.validate()?;
    if windows.is_empty() {
        return Err(Error::InsufficientData("no training windows".into()));
    }
    let window = cfg.architecture.window;
    if windows.inputs.iter().chain(&windows.targets).any(|w| w.len() != window) {
        return Err(Error::Shape(format!(
            "all windows must have {window} steps to match the architecture"
        )));
    }

    let mut model = QcnnModel::init(cfg.architecture, theta, derive_seed(cfg.seed, &[0]))?;
    let mut params = model.params();
    let mut opt = AdadeltaState::new(params.len(), cfg.rho, cfg.epsilon)?;
    let initial_loss = mean_loss(&model, windows);

    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut steps = 0;
    for epoch in 0..cfg.epochs {
        Philox::new(derive_seed(cfg.seed, &[1, epoch as u64])).shuffle(&mut order);
        let mut total = 0.0;
        let mut batches = 0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grad) = batch_gradient(&model, windows, batch);
            opt.step(&mut params, &grad)?;
            model.set_params(&params)?;
            total += loss;
            batches += 1;
            steps += 1;
        }
        let epoch_loss = total / batches as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::FitFailure(format!("training loss diverged at epoch {epoch}")));
        }
        epoch_losses.push(epoch_loss);
        on_epoch(epoch, epoch_loss);
    }

    let final_loss = mean_loss(&model, windows);
    Ok(Trained {
        model,
        report: TrainReport {
            initial_loss,
            final_loss,
            epoch_losses,
            steps,
        },
    })
}
