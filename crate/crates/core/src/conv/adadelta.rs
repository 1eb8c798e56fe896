use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Running averages for the Adadelta update rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdadeltaState {
    /// Decaying average of squared gradients.
    pub sq_grad: Vec<f64>,
    /// Decaying average of squared updates.
    pub sq_update: Vec<f64>,
    pub rho: f64,
    pub epsilon: f64,
}

impl AdadeltaState {
    pub fn new(n_params: usize, rho: f64, epsilon: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) || !(epsilon > 0.0) {
            return Err(Error::Config(format!(
                "adadelta needs rho in (0, 1) and epsilon > 0, got rho {rho}, epsilon {epsilon}"
            )));
        }
        Ok(Self {
            sq_grad: vec![0.0; n_params],
            sq_update: vec![0.0; n_params],
            rho,
            epsilon,
        })
    }

    /// One update:
    /// `E[g²] ← ρE[g²] + (1-ρ)g²`,
    /// `Δ = -sqrt(E[Δ²] + ε) / sqrt(E[g²] + ε) · g`,
    /// `E[Δ²] ← ρE[Δ²] + (1-ρ)Δ²`, `x ← x + Δ`.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.sq_grad.len() {
            return Err(Error::Shape(format!(
                "adadelta over {} parameters given {} values and {} gradients",
                self.sq_grad.len(),
                params.len(),
                grads.len()
            )));
        }
        let (rho, eps) = (self.rho, self.epsilon);
        for (((p, &g), eg), ed) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.sq_grad)
            .zip(&mut self.sq_update)
        {
            *eg = rho * *eg + (1.0 - rho) * g * g;
            let delta = -((*ed + eps).sqrt() / (*eg + eps).sqrt()) * g;
            *ed = rho * *ed + (1.0 - rho) * delta * delta;
            *p += delta;
        }
        Ok(())
    }
}

/// Applies one Adadelta step to `params` in place.
pub fn adadelta_step(params: &mut [f64], grads: &[f64], state: &mut AdadeltaState) -> Result<()> {
    state.step(params, grads)
}
