use serde::{Deserialize, Serialize};

use super::kernels;
use crate::error::{Error, Result};

macro_rules! dispatch {
    ($ci:expr, $co:expr, $f:ident, $generic:block, $($arg:expr),*) => {
        match ($ci, $co) {
            (1, 8) => kernels::$f::<1, 8>($($arg),*),
            (8, 8) => kernels::$f::<8, 8>($($arg),*),
            (8, 1) => kernels::$f::<8, 1>($($arg),*),
            (1, 4) => kernels::$f::<1, 4>($($arg),*),
            (4, 4) => kernels::$f::<4, 4>($($arg),*),
            (4, 1) => kernels::$f::<4, 1>($($arg),*),
            _ => $generic,
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

/// A 1-D causal convolution.
///
/// Weights are stored `[out][in][tap]`. Tap `j` of a kernel of size `k`
/// reads the input `dilation * (k - 1 - j)` steps in the past, so the last
/// tap is the current step. Positions before the sequence start read zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub dilation: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// A multi-channel sequence stored time-major: `data[t * channels + c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Signal {
    pub fn from_series(xs: &[f64]) -> Self {
        Self {
            channels: 1,
            data: xs.to_vec(),
        }
    }

    /// Builds a signal from per-channel sequences of equal length.
    pub fn from_channels(channels: &[Vec<f64>]) -> Result<Self> {
        let len = channels.first().map_or(0, Vec::len);
        if channels.iter().any(|c| c.len() != len) {
            return Err(Error::Shape("channels differ in length".into()));
        }
        let mut data = Vec::with_capacity(len * channels.len());
        for t in 0..len {
            data.extend(channels.iter().map(|c| c[t]));
        }
        Ok(Self {
            channels: channels.len(),
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.channels).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }
}

impl ConvLayer {
    pub fn zeros(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        dilation: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || dilation == 0 {
            return Err(Error::Shape(format!(
                "invalid layer shape: in {in_channels}, out {out_channels}, kernel {kernel}, dilation {dilation}"
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            kernel,
            dilation,
            activation,
            weights: vec![0.0; out_channels * in_channels * kernel],
            biases: vec![0.0; out_channels],
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }

    /// Number of past steps (plus the current one) this layer can see.
    pub fn span(&self) -> usize {
        self.dilation * (self.kernel - 1) + 1
    }

    #[inline]
    pub fn weight(&self, out: usize, input: usize, tap: usize) -> f64 {
        self.weights[(out * self.in_channels + input) * self.kernel + tap]
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.weights.len() != self.out_channels * self.in_channels * self.kernel
            || self.biases.len() != self.out_channels
            || self.kernel == 0
            || self.dilation == 0
        {
            return Err(Error::Shape("layer parameters inconsistent with declared shape".into()));
        }
        Ok(())
    }

    /// Weights regrouped `[tap][in][out]` so that inner loops run over output channels.
    pub(crate) fn transposed(&self, buf: &mut Vec<f64>) {
        buf.clear();
        buf.resize(self.weights.len(), 0.0);
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        for o in 0..co {
            for i in 0..ci {
                for j in 0..k {
                    buf[(j * ci + i) * co + o] = self.weights[(o * ci + i) * k + j];
                }
            }
        }
    }

    /// Weights regrouped `[tap][out][in]` for input-gradient sums.
    pub(crate) fn transposed_for_input(&self, buf: &mut Vec<f64>) {
        buf.clear();
        buf.resize(self.weights.len(), 0.0);
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        for o in 0..co {
            for i in 0..ci {
                for j in 0..k {
                    buf[(j * co + o) * ci + i] = self.weights[(o * ci + i) * k + j];
                }
            }
        }
    }

    /// Pre-activations `z` and outputs `out` for a time-major input of `len` steps.
    pub(crate) fn forward_raw(&self, wt: &[f64], x: &[f64], len: usize, z: &mut [f64], out: &mut [f64]) {
        let (ci, co, k, d) = (self.in_channels, self.out_channels, self.kernel, self.dilation);
        let relu = self.activation == Activation::Relu;
        dispatch!(ci, co, forward, { self.forward_generic(wt, x, len, z, out) }, wt, &self.biases, k, d, relu, x, len, z, out)
    }

    fn forward_generic(&self, wt: &[f64], x: &[f64], len: usize, z: &mut [f64], out: &mut [f64]) {
        let (ci, co, k, d) = (self.in_channels, self.out_channels, self.kernel, self.dilation);
        for t in 0..len {
            let zt = &mut z[t * co..(t + 1) * co];
            zt.copy_from_slice(&self.biases);
            for j in 0..k {
                let lag = d * (k - 1 - j);
                if lag > t {
                    continue;
                }
                let xt = &x[(t - lag) * ci..(t - lag + 1) * ci];
                let wj = &wt[j * ci * co..(j + 1) * ci * co];
                for (i, &xv) in xt.iter().enumerate() {
                    let w = &wj[i * co..(i + 1) * co];
                    for (zo, &wo) in zt.iter_mut().zip(w) {
                        *zo += xv * wo;
                    }
                }
            }
        }
        match self.activation {
            Activation::Relu => {
                for (o, &zv) in out.iter_mut().zip(z.iter()) {
                    *o = if zv > 0.0 { zv } else { 0.0 };
                }
            }
            Activation::Identity => out.copy_from_slice(&z[..out.len()]),
        }
    }

    /// Back-propagates `dz` (gradient w.r.t. pre-activations, modified in
    /// place to apply the activation mask first) through the layer.
    ///
    /// Weight gradients accumulate `[tap][in][out]` into `gwt`, bias
    /// gradients into `gb`; input gradients are written into `dx` when given.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward_raw(
        &self,
        wt: &[f64],
        wd: &[f64],
        x: &[f64],
        z: &[f64],
        len: usize,
        dz: &mut [f64],
        gwt: &mut [f64],
        gb: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let (ci, co, k, d) = (self.in_channels, self.out_channels, self.kernel, self.dilation);
        let relu = self.activation == Activation::Relu;
        dispatch!(
            ci, co, backward,
            { self.backward_generic(wt, x, z, len, dz, gwt, gb, dx) },
            wd, k, d, relu, x, z, len, dz, gwt, gb, dx
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn backward_generic(
        &self,
        wt: &[f64],
        x: &[f64],
        z: &[f64],
        len: usize,
        dz: &mut [f64],
        gwt: &mut [f64],
        gb: &mut [f64],
        mut dx: Option<&mut [f64]>,
    ) {
        let (ci, co, k, d) = (self.in_channels, self.out_channels, self.kernel, self.dilation);
        if self.activation == Activation::Relu {
            // subgradient 0 at the kink
            for (g, &zv) in dz.iter_mut().zip(z) {
                if zv <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        if let Some(dx) = dx.as_deref_mut() {
            dx.fill(0.0);
        }
        for t in 0..len {
            let dzt = &dz[t * co..(t + 1) * co];
            for (b, &g) in gb.iter_mut().zip(dzt) {
                *b += g;
            }
            for j in 0..k {
                let lag = d * (k - 1 - j);
                if lag > t {
                    continue;
                }
                let src = (t - lag) * ci;
                let wj = &wt[j * ci * co..(j + 1) * ci * co];
                let gj = &mut gwt[j * ci * co..(j + 1) * ci * co];
                for i in 0..ci {
                    let xv = x[src + i];
                    let g = &mut gj[i * co..(i + 1) * co];
                    for (gv, &dzo) in g.iter_mut().zip(dzt) {
                        *gv += xv * dzo;
                    }
                }
                if let Some(dx) = dx.as_deref_mut() {
                    let dxt = &mut dx[src..src + ci];
                    for (i, dxi) in dxt.iter_mut().enumerate() {
                        let w = &wj[i * co..(i + 1) * co];
                        let mut acc = 0.0;
                        for (&wo, &dzo) in w.iter().zip(dzt) {
                            acc += wo * dzo;
                        }
                        *dxi += acc;
                    }
                }
            }
        }
    }

    /// Adds `[tap][in][out]` weight gradients into canonical `[out][in][tap]` order.
    pub(crate) fn untranspose_into(&self, gwt: &[f64], dst: &mut [f64]) {
        let (ci, co, k) = (self.in_channels, self.out_channels, self.kernel);
        for o in 0..co {
            for i in 0..ci {
                for j in 0..k {
                    dst[(o * ci + i) * k + j] += gwt[(j * ci + i) * co + o];
                }
            }
        }
    }
}

/// Applies one causal convolution layer, activation included.
pub fn causal_conv_forward(x: &Signal, layer: &ConvLayer) -> Result<Signal> {
    layer.check()?;
    if x.channels != layer.in_channels {
        return Err(Error::Shape(format!(
            "layer expects {} input channels, got {}",
            layer.in_channels, x.channels
        )));
    }
    let len = x.len();
    if len == 0 {
        return Err(Error::Shape("empty input sequence".into()));
    }
    let mut wt = Vec::new();
    layer.transposed(&mut wt);
    let mut z = vec![0.0; len * layer.out_channels];
    let mut out = vec![0.0; len * layer.out_channels];
    layer.forward_raw(&wt, &x.data, len, &mut z, &mut out);
    Ok(Signal {
        channels: layer.out_channels,
        data: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(kernel: &[f64], dilation: usize, act: Activation) -> ConvLayer {
        let mut l = ConvLayer::zeros(1, 1, kernel.len(), dilation, act).unwrap();
        l.weights.copy_from_slice(kernel);
        l
    }

    #[test]
    fn identity_filter() {
        let x = Signal::from_series(&[1.0, -2.0, 3.5, 0.25]);
        let y = causal_conv_forward(&x, &single(&[1.0], 1, Activation::Identity)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn current_tap_only() {
        let x = Signal::from_series(&(0..100).map(|i| i as f64 - 40.0).collect::<Vec<_>>());
        let y = causal_conv_forward(&x, &single(&[0.0, 1.0], 32, Activation::Identity)).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dilated_lag_with_zero_padding() {
        let x = Signal::from_series(&[1.0, 2.0, 3.0, 4.0]);
        let y = causal_conv_forward(&x, &single(&[1.0, 0.0], 2, Activation::Identity)).unwrap();
        assert_eq!(y.data, vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn relu_and_bias() {
        let x = Signal::from_series(&[1.0, -3.0, 0.5]);
        let mut l = single(&[2.0], 1, Activation::Relu);
        l.biases[0] = 1.0;
        let y = causal_conv_forward(&x, &l).unwrap();
        assert_eq!(y.data, vec![3.0, 0.0, 2.0]);
    }

    #[test]
    fn multi_channel_matches_definition() {
        let mut l = ConvLayer::zeros(2, 3, 2, 3, Activation::Identity).unwrap();
        for (n, w) in l.weights.iter_mut().enumerate() {
            *w = (n as f64 * 0.7).sin();
        }
        l.biases = vec![0.1, -0.2, 0.3];
        let a: Vec<f64> = (0..9).map(|t| t as f64 * 0.5).collect();
        let b: Vec<f64> = (0..9).map(|t| 1.0 - t as f64).collect();
        let x = Signal::from_channels(&[a.clone(), b.clone()]).unwrap();
        let y = causal_conv_forward(&x, &l).unwrap();
        for o in 0..3 {
            let ch = y.channel(o);
            for t in 0..9 {
                let mut expect = l.biases[o];
                for (i, src) in [&a, &b].iter().enumerate() {
                    for j in 0..2 {
                        let lag = 3 * (1 - j);
                        if t >= lag {
                            expect += l.weight(o, i, j) * src[t - lag];
                        }
                    }
                }
                assert!((ch[t] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let l = ConvLayer::zeros(2, 1, 1, 1, Activation::Identity).unwrap();
        let x = Signal::from_series(&[1.0, 2.0]);
        assert!(matches!(causal_conv_forward(&x, &l), Err(Error::Shape(_))));
    }
}
