//! Fixed-width convolution kernels for the channel counts the default
//! architecture uses. Results are bitwise identical to the generic loops
//! in `layer.rs`: every sum is accumulated in the same order.
//!
//! On x86-64 the kernels are also compiled with AVX2 enabled and selected at
//! runtime. No fused multiply-add is used, so both builds round identically.

macro_rules! with_avx2 {
    ($name:ident, $inner:ident, ($($arg:ident: $ty:ty),*)) => {
        #[allow(clippy::too_many_arguments)]
        pub(crate) fn $name<const CI: usize, const CO: usize>($($arg: $ty),*) {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                #[allow(clippy::too_many_arguments)]
                unsafe fn avx2<const CI: usize, const CO: usize>($($arg: $ty),*) {
                    $inner::<CI, CO>($($arg),*)
                }
                if std::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2, checked just above.
                    return unsafe { avx2::<CI, CO>($($arg),*) };
                }
            }
            $inner::<CI, CO>($($arg),*)
        }
    };
}

with_avx2!(forward, forward_impl, (
    wt: &[f64], bias: &[f64], kernel: usize, dilation: usize, relu: bool,
    x: &[f64], len: usize, z: &mut [f64], out: &mut [f64]
));

with_avx2!(backward, backward_impl, (
    wd: &[f64], kernel: usize, dilation: usize, relu: bool, x: &[f64], z: &[f64],
    len: usize, dz: &mut [f64], gwt: &mut [f64], gb: &mut [f64], dx: Option<&mut [f64]>
));

/// Forward pass with `CI` inputs and `CO` outputs; `wt` is `[tap][in][out]`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn forward_impl<const CI: usize, const CO: usize>(
    wt: &[f64],
    bias: &[f64],
    kernel: usize,
    dilation: usize,
    relu: bool,
    x: &[f64],
    len: usize,
    z: &mut [f64],
    out: &mut [f64],
) {
    let bias: [f64; CO] = bias.try_into().expect("bias width");
    let x = &x[..len * CI];
    for t in 0..len {
        let mut acc = bias;
        for j in 0..kernel {
            let lag = dilation * (kernel - 1 - j);
            if lag > t {
                continue;
            }
            let xt: &[f64; CI] = x[(t - lag) * CI..(t - lag + 1) * CI].try_into().unwrap();
            let wj = &wt[j * CI * CO..(j + 1) * CI * CO];
            for i in 0..CI {
                let w: &[f64; CO] = wj[i * CO..(i + 1) * CO].try_into().unwrap();
                let xv = xt[i];
                for o in 0..CO {
                    acc[o] += xv * w[o];
                }
            }
        }
        z[t * CO..(t + 1) * CO].copy_from_slice(&acc);
        let ot = &mut out[t * CO..(t + 1) * CO];
        for o in 0..CO {
            ot[o] = if relu && !(acc[o] > 0.0) { 0.0 } else { acc[o] };
        }
    }
}

/// Backward pass. `dz` holds the output gradient and is masked in place;
/// `wd` is `[tap][out][in]`; weight gradients accumulate `[tap][in][out]`.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn backward_impl<const CI: usize, const CO: usize>(
    wd: &[f64],
    kernel: usize,
    dilation: usize,
    relu: bool,
    x: &[f64],
    z: &[f64],
    len: usize,
    dz: &mut [f64],
    gwt: &mut [f64],
    gb: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    if relu {
        for (g, &zv) in dz[..len * CO].iter_mut().zip(&z[..len * CO]) {
            if zv <= 0.0 {
                *g = 0.0;
            }
        }
    }
    if let Some(dx) = dx.as_deref_mut() {
        dx[..len * CI].fill(0.0);
    }
    let mut bsum: [f64; CO] = gb[..CO].try_into().unwrap();
    for t in 0..len {
        let dzt: [f64; CO] = dz[t * CO..(t + 1) * CO].try_into().unwrap();
        for o in 0..CO {
            bsum[o] += dzt[o];
        }
        for j in 0..kernel {
            let lag = dilation * (kernel - 1 - j);
            if lag > t {
                continue;
            }
            let src = (t - lag) * CI;
            let xt: [f64; CI] = x[src..src + CI].try_into().unwrap();
            let gj = &mut gwt[j * CI * CO..(j + 1) * CI * CO];
            for i in 0..CI {
                let g: &mut [f64; CO] = (&mut gj[i * CO..(i + 1) * CO]).try_into().unwrap();
                let xv = xt[i];
                for o in 0..CO {
                    g[o] += xv * dzt[o];
                }
            }
            if let Some(dx) = dx.as_deref_mut() {
                let wj = &wd[j * CO * CI..(j + 1) * CO * CI];
                let mut acc = [0.0; CI];
                for o in 0..CO {
                    let w: &[f64; CI] = wj[o * CI..(o + 1) * CI].try_into().unwrap();
                    let g = dzt[o];
                    for i in 0..CI {
                        acc[i] += w[i] * g;
                    }
                }
                let dxt: &mut [f64; CI] = (&mut dx[src..src + CI]).try_into().unwrap();
                for i in 0..CI {
                    dxt[i] += acc[i];
                }
            }
        }
    }
    gb[..CO].copy_from_slice(&bsum);
}
