use serde::{Deserialize, Serialize};

use super::layer::{Activation, ConvLayer};
use super::loss::{check_theta, pinball, pinball_slope};
use crate::data::{Scaler, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::rng::Philox;

/// Shape of the network: `hidden_layers` dilated causal convolutions with
/// `filters` channels and dilations `1, 2, 4, ...`, followed by a 1x1
/// linear head producing one channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub window: usize,
    pub hidden_layers: usize,
    pub filters: usize,
    pub kernel: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            hidden_layers: 6,
            filters: 8,
            kernel: 2,
        }
    }
}

impl Architecture {
    pub fn dilations(&self) -> Vec<usize> {
        (0..self.hidden_layers).map(|l| 1usize << l).collect()
    }

    /// `1 + sum(dilation * (kernel - 1))` over the hidden layers.
    pub fn receptive_field(&self) -> usize {
        1 + self.dilations().iter().map(|d| d * (self.kernel - 1)).sum::<usize>()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.hidden_layers == 0 || self.filters == 0 || self.kernel == 0 {
            return Err(Error::Config(format!("invalid architecture {self:?}")));
        }
        if self.hidden_layers > 24 {
            return Err(Error::Config("at most 24 hidden layers are supported".into()));
        }
        Ok(())
    }
}

/// Quantile convolutional network for one quantile level.
#[derive(Debug, Clone, PartialEq)]
pub struct QcnnModel {
    pub hidden: Vec<ConvLayer>,
    pub head: ConvLayer,
    pub theta: f64,
    pub window: usize,
}

impl QcnnModel {
    /// All parameters zero.
    pub fn zeros(arch: Architecture, theta: f64) -> Result<Self> {
        arch.validate()?;
        check_theta(theta)?;
        let mut hidden = Vec::with_capacity(arch.hidden_layers);
        let mut in_ch = 1;
        for d in arch.dilations() {
            hidden.push(ConvLayer::zeros(in_ch, arch.filters, arch.kernel, d, Activation::Relu)?);
            in_ch = arch.filters;
        }
        let head = ConvLayer::zeros(in_ch, 1, 1, 1, Activation::Identity)?;
        Ok(Self {
            hidden,
            head,
            theta,
            window: arch.window,
        })
    }

    /// Glorot-uniform weights on `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init(arch: Architecture, theta: f64, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch, theta)?;
        let mut rng = Philox::new(seed);
        for layer in model.layers_mut() {
            let fan_in = (layer.in_channels * layer.kernel) as f64;
            let fan_out = (layer.out_channels * layer.kernel) as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            for w in &mut layer.weights {
                *w = rng.uniform_range(-limit, limit);
            }
        }
        Ok(model)
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            window: self.window,
            hidden_layers: self.hidden.len(),
            filters: self.head.in_channels,
            kernel: self.hidden.first().map_or(1, |l| l.kernel),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &ConvLayer> {
        self.hidden.iter().chain(std::iter::once(&self.head))
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut ConvLayer> {
        self.hidden.iter_mut().chain(std::iter::once(&mut self.head))
    }

    pub fn receptive_field(&self) -> usize {
        1 + self.layers().map(|l| l.span() - 1).sum::<usize>()
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(ConvLayer::param_count).sum()
    }

    /// Parameters flattened layer by layer, each as weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut rest = flat;
        for l in self.layers_mut() {
            let (w, r) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, r) = r.split_at(l.biases.len());
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.window {
            return Err(Error::Shape(format!(
                "network input must have {} steps, got {}",
                self.window,
                x.len()
            )));
        }
        Ok(())
    }

    /// Per-step quantile forecasts: `output[t]` targets the return at `t + 1`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut ws = Workspace::new(self);
        Ok(ws.forward(self, x).to_vec())
    }

    /// Mean pinball loss over all steps and its exact gradient.
    pub fn backward(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_input(y)?;
        let mut ws = Workspace::new(self);
        let mut grad = vec![0.0; self.param_count()];
        let n = x.len() as f64;
        let loss = ws.accumulate_gradient(self, x, y, 1.0 / n, &mut grad);
        Ok((loss / n, grad))
    }

    /// Like [`backward`](Self::backward) but for the summed loss.
    pub fn backward_sum(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        self.check_input(y)?;
        let mut ws = Workspace::new(self);
        let mut grad = vec![0.0; self.param_count()];
        let loss = ws.accumulate_gradient(self, x, y, 1.0, &mut grad);
        Ok((loss, grad))
    }

    /// Mean pinball loss of the forecasts for one window.
    pub fn loss(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let q = self.forward(x)?;
        super::loss::pinball_loss(y, &q, self.theta)
    }

    /// Value at Risk for the day after `recent` (the last `window` scaled
    /// returns): the negated, unscaled quantile forecast at the final step.
    pub fn predict_var(&self, recent: &[f64], scaler: &Scaler) -> Result<f64> {
        let q = self.forward(recent)?;
        Ok(-scaler.invert(q[q.len() - 1]))
    }
}

/// Reusable activation buffers for forward and backward passes.
#[derive(Debug, Clone)]
pub struct Workspace {
    len: usize,
    // weights per layer regrouped [tap][in][out] and [tap][out][in]
    wt: Vec<Vec<f64>>,
    wd: Vec<Vec<f64>>,
    // z[l], a[l]: pre-activation and output of layer l
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    dz: Vec<f64>,
    dx: Vec<f64>,
    gwt: Vec<Vec<f64>>,
}

impl Workspace {
    pub fn new(model: &QcnnModel) -> Self {
        let len = model.window;
        let layers: Vec<&ConvLayer> = model.layers().collect();
        let wt = layers
            .iter()
            .map(|l| {
                let mut buf = Vec::new();
                l.transposed(&mut buf);
                buf
            })
            .collect();
        let wd = layers
            .iter()
            .map(|l| {
                let mut buf = Vec::new();
                l.transposed_for_input(&mut buf);
                buf
            })
            .collect();
        let widest = layers.iter().map(|l| l.out_channels.max(l.in_channels)).max().unwrap_or(1);
        Self {
            len,
            wt,
            wd,
            z: layers.iter().map(|l| vec![0.0; len * l.out_channels]).collect(),
            a: layers.iter().map(|l| vec![0.0; len * l.out_channels]).collect(),
            dz: vec![0.0; len * widest],
            dx: vec![0.0; len * widest],
            gwt: layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
        }
    }

    /// Refreshes cached transposed weights after the model changed.
    pub fn sync(&mut self, model: &QcnnModel) {
        for ((wt, wd), l) in self.wt.iter_mut().zip(&mut self.wd).zip(model.layers()) {
            l.transposed(wt);
            l.transposed_for_input(wd);
        }
    }

    pub(crate) fn forward<'a>(&'a mut self, model: &QcnnModel, x: &[f64]) -> &'a [f64] {
        let len = self.len;
        let layers: Vec<&ConvLayer> = model.layers().collect();
        for (l, layer) in layers.iter().enumerate() {
            let (prev, rest) = self.a.split_at_mut(l);
            let input: &[f64] = if l == 0 { x } else { &prev[l - 1] };
            layer.forward_raw(&self.wt[l], input, len, &mut self.z[l], &mut rest[0]);
        }
        &self.a[layers.len() - 1]
    }

    /// Adds `scale * d(sum of pinball losses)/d(params)` to `grad` and
    /// returns the (unscaled) summed loss.
    pub(crate) fn accumulate_gradient(
        &mut self,
        model: &QcnnModel,
        x: &[f64],
        y: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let len = self.len;
        let theta = model.theta;
        let layers: Vec<&ConvLayer> = model.layers().collect();
        let n_layers = layers.len();
        self.forward(model, x);

        let q = &self.a[n_layers - 1];
        let mut loss = 0.0;
        for t in 0..len {
            loss += pinball(y[t], q[t], theta);
            self.dz[t] = scale * pinball_slope(y[t], q[t], theta);
        }

        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in &layers {
            offsets.push(off);
            off += l.param_count();
        }

        for l in (0..n_layers).rev() {
            let layer = layers[l];
            let co = layer.out_channels;
            let ci = layer.in_channels;
            let gwt = &mut self.gwt[l];
            gwt.fill(0.0);
            let (gw_dst, gb_dst) = grad[offsets[l]..offsets[l] + layer.param_count()]
                .split_at_mut(layer.weights.len());
            let input: &[f64] = if l == 0 { x } else { &self.a[l - 1] };
            let dx = if l == 0 { None } else { Some(&mut self.dx[..len * ci]) };
            layer.backward_raw(
                &self.wt[l],
                &self.wd[l],
                input,
                &self.z[l],
                len,
                &mut self.dz[..len * co],
                gwt,
                gb_dst,
                dx,
            );
            layer.untranspose_into(gwt, gw_dst);
            if l > 0 {
                self.dz[..len * ci].copy_from_slice(&self.dx[..len * ci]);
            }
        }
        loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_architecture_shape() {
        let m = QcnnModel::zeros(Architecture::default(), 0.05).unwrap();
        assert_eq!(m.hidden.len(), 6);
        assert_eq!(
            m.hidden.iter().map(|l| l.dilation).collect::<Vec<_>>(),
            vec![1, 2, 4, 8, 16, 32]
        );
        assert!(m.hidden.iter().all(|l| l.out_channels == 8 && l.kernel == 2));
        assert!(m.hidden.iter().all(|l| l.activation == Activation::Relu));
        assert_eq!((m.head.in_channels, m.head.out_channels, m.head.kernel), (8, 1, 1));
        assert_eq!(m.head.activation, Activation::Identity);
        assert_eq!(m.receptive_field(), 64);
        assert_eq!(Architecture::default().receptive_field(), 64);
        assert_eq!(m.param_count(), 24 + 5 * 136 + 9);
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = QcnnModel::zeros(Architecture::default(), 0.05).unwrap();
        let x: Vec<f64> = (0..128).map(|t| (t as f64).cos()).collect();
        assert!(m.forward(&x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_length_is_shape_error() {
        let m = QcnnModel::zeros(Architecture::default(), 0.05).unwrap();
        assert!(matches!(m.forward(&[0.0; 127]), Err(Error::Shape(_))));
        let s = Scaler::new(0.0, 1.0).unwrap();
        assert!(matches!(m.predict_var(&[0.0; 129], &s), Err(Error::Shape(_))));
    }

    #[test]
    fn params_round_trip() {
        let m = QcnnModel::init(Architecture::default(), 0.05, 3).unwrap();
        let mut z = QcnnModel::zeros(Architecture::default(), 0.05).unwrap();
        z.set_params(&m.params()).unwrap();
        assert_eq!(z, m);
        assert!(z.set_params(&[0.0; 3]).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = QcnnModel::init(Architecture::default(), 0.05, 9).unwrap();
        let b = QcnnModel::init(Architecture::default(), 0.05, 9).unwrap();
        let c = QcnnModel::init(Architecture::default(), 0.05, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let limit = (6.0f64 / (16.0 + 16.0)).sqrt();
        assert!(a.hidden[3].weights.iter().all(|w| w.abs() <= limit));
        assert!(a.hidden[3].biases.iter().all(|&b| b == 0.0));
    }

    fn head_only(bias: f64) -> QcnnModel {
        let mut m = QcnnModel::zeros(Architecture::default(), 0.05).unwrap();
        m.head.biases[0] = bias;
        m
    }

    #[test]
    fn predict_var_examples() {
        let x = vec![0.0; 128];
        let s = Scaler::new(0.0, 0.02).unwrap();
        assert!((head_only(-1.0).predict_var(&x, &s).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(head_only(0.0).predict_var(&x, &s).unwrap(), 0.0);
        let s = Scaler::new(0.001, 0.01).unwrap();
        assert!((head_only(-2.0).predict_var(&x, &s).unwrap() - 0.019).abs() < 1e-15);
    }

    #[test]
    fn mean_and_sum_gradients_differ_by_length() {
        let m = QcnnModel::init(Architecture::default(), 0.1, 5).unwrap();
        let x: Vec<f64> = (0..128).map(|t| (t as f64 * 0.3).sin()).collect();
        let y: Vec<f64> = (0..128).map(|t| (t as f64 * 0.3 + 0.3).sin()).collect();
        let (lm, gm) = m.backward(&x, &y).unwrap();
        let (ls, gs) = m.backward_sum(&x, &y).unwrap();
        assert!((lm * 128.0 - ls).abs() < 1e-12 * ls.abs().max(1.0));
        for (a, b) in gm.iter().zip(&gs) {
            assert!((a * 128.0 - b).abs() <= 1e-12 * b.abs().max(1e-12));
        }
    }

    #[test]
    fn dead_network_has_zero_hidden_gradient() {
        // Negative biases kill every rectifier and the head weights are zero:
        // only the head bias receives gradient.
        let mut m = QcnnModel::init(Architecture::default(), 0.05, 1).unwrap();
        for l in &mut m.hidden {
            l.biases.fill(-100.0);
        }
        m.head.weights.fill(0.0);
        let x = vec![0.1; 128];
        let y = vec![10.0; 128];
        let (_, g) = m.backward(&x, &y).unwrap();
        let n = g.len();
        assert!(g[..n - 1].iter().all(|&v| v == 0.0));
        assert!((g[n - 1] + 0.05).abs() < 1e-15);
    }
}
