//! Convolution, batch normalization and activations with exact backward
//! passes.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::spec::{Activation, LayerSpec};
use crate::tensor::Tensor3;
use crate::{Error, Result};

/// Batch-norm variance guard.
pub const BN_EPS: f64 = 1e-5;
/// Fraction of the previous running statistic kept at each update.
pub const BN_MOMENTUM: f64 = 0.9;

fn check_weights(layer: &LayerSpec, in_channels: usize, weight: &[f64], bias: &[f64]) -> Result<()> {
    let need = layer.out_channels * in_channels * layer.kernel_w * layer.kernel_h;
    if weight.len() != need || bias.len() != layer.out_channels {
        return Err(Error::shape(
            format!("{need} weights and {} biases", layer.out_channels),
            format!("{} weights and {} biases", weight.len(), bias.len()),
        ));
    }
    Ok(())
}

/// Zero-padded, strided cross-correlation.
pub fn conv2d_forward(x: &Tensor3, layer: &LayerSpec, weight: &[f64], bias: &[f64]) -> Result<Tensor3> {
    let (w, h, cin) = x.dims();
    check_weights(layer, cin, weight, bias)?;
    let (ow, oh) = layer
        .output_dims(w, h)
        .ok_or_else(|| Error::shape("kernel fitting the padded input", format!("{w}x{h} input")))?;
    let (kw, kh) = (layer.kernel_w, layer.kernel_h);
    let cout = layer.out_channels;
    let mut out = Tensor3::zeros(ow, oh, cout);
    let xs = x.as_slice();
    let os = out.as_mut_slice();
    for ox in 0..ow {
        for oy in 0..oh {
            let base = (ox * oh + oy) * cout;
            os[base..base + cout].copy_from_slice(bias);
            for kx in 0..kw {
                let ix = (ox * layer.stride_w + kx) as isize - layer.padding_w as isize;
                if ix < 0 || ix >= w as isize {
                    continue;
                }
                for ky in 0..kh {
                    let iy = (oy * layer.stride_h + ky) as isize - layer.padding_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xin = ((ix as usize) * h + iy as usize) * cin;
                    for co in 0..cout {
                        let mut acc = 0.0;
                        for ci in 0..cin {
                            acc += weight[((co * cin + ci) * kw + kx) * kh + ky] * xs[xin + ci];
                        }
                        os[base + co] += acc;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub fn conv2d_backward(
    x: &Tensor3,
    layer: &LayerSpec,
    weight: &[f64],
    grad_out: &Tensor3,
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
) -> Result<Tensor3> {
    let (w, h, cin) = x.dims();
    let (ow, oh, cout) = grad_out.dims();
    if layer.output_dims(w, h) != Some((ow, oh)) || cout != layer.out_channels {
        return Err(Error::shape(
            "gradient matching the forward output",
            format!("{ow}x{oh}x{cout}"),
        ));
    }
    if grad_weight.len() != weight.len() || grad_bias.len() != cout {
        return Err(Error::shape("gradient buffers matching parameters", "mismatch"));
    }
    let (kw, kh) = (layer.kernel_w, layer.kernel_h);
    let mut gx = Tensor3::zeros(w, h, cin);
    let xs = x.as_slice();
    let gs = grad_out.as_slice();
    let gxs = gx.as_mut_slice();
    for ox in 0..ow {
        for oy in 0..oh {
            let base = (ox * oh + oy) * cout;
            for co in 0..cout {
                grad_bias[co] += gs[base + co];
            }
            for kx in 0..kw {
                let ix = (ox * layer.stride_w + kx) as isize - layer.padding_w as isize;
                if ix < 0 || ix >= w as isize {
                    continue;
                }
                for ky in 0..kh {
                    let iy = (oy * layer.stride_h + ky) as isize - layer.padding_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xin = ((ix as usize) * h + iy as usize) * cin;
                    for co in 0..cout {
                        let g = gs[base + co];
                        if g == 0.0 {
                            continue;
                        }
                        for ci in 0..cin {
                            let k = ((co * cin + ci) * kw + kx) * kh + ky;
                            grad_weight[k] += g * xs[xin + ci];
                            gxs[xin + ci] += g * weight[k];
                        }
                    }
                }
            }
        }
    }
    Ok(gx)
}

/// Cached quantities of one batch-norm application.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    /// Normalized activations per sample.
    pub normalized: Vec<Tensor3>,
    /// `1/sqrt(var + ε)` per channel.
    pub inv_std: Vec<f64>,
    /// Statistics came from the batch (training) rather than running values.
    pub batch_stats: bool,
}

/// Per-channel batch statistics over samples and the spatial plane.
pub fn batch_moments(xs: &[Tensor3]) -> (Vec<f64>, Vec<f64>) {
    let c = xs[0].channels();
    let mut mean = vec![0.0; c];
    let mut count = 0usize;
    for x in xs {
        for fibre in x.as_slice().chunks(c) {
            for (m, v) in mean.iter_mut().zip(fibre) {
                *m += v;
            }
            count += 1;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; c];
    for x in xs {
        for fibre in x.as_slice().chunks(c) {
            for ((s, v), m) in var.iter_mut().zip(fibre).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
    }
    var.iter_mut().for_each(|s| *s /= count as f64);
    (mean, var)
}

/// Batch normalization. In training mode the batch statistics are used and
/// folded into the running statistics; otherwise the running statistics
/// normalize the input.
pub fn batchnorm_forward(
    xs: &[Tensor3],
    scale: &[f64],
    shift: &[f64],
    running_mean: &mut [f64],
    running_var: &mut [f64],
    training: bool,
) -> Result<(Vec<Tensor3>, BatchNormCache)> {
    if xs.is_empty() {
        return Err(Error::shape("non-empty batch", "empty batch"));
    }
    let c = xs[0].channels();
    if xs.iter().any(|x| x.dims() != xs[0].dims()) || scale.len() != c || shift.len() != c {
        return Err(Error::shape(format!("{c} channels across the batch"), "mismatch"));
    }
    let (mean, var) = if training {
        let (mean, var) = batch_moments(xs);
        let n = (xs.len() * xs[0].width() * xs[0].height()) as f64;
        let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for k in 0..c {
            running_mean[k] = BN_MOMENTUM * running_mean[k] + (1.0 - BN_MOMENTUM) * mean[k];
            running_var[k] = BN_MOMENTUM * running_var[k] + (1.0 - BN_MOMENTUM) * var[k] * unbiased;
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut normalized = Vec::with_capacity(xs.len());
    let mut outputs = Vec::with_capacity(xs.len());
    for x in xs {
        let mut xn = x.clone();
        let mut y = x.clone();
        for (k, (n, o)) in xn.as_mut_slice().iter_mut().zip(y.as_mut_slice()).enumerate() {
            let ch = k % c;
            *n = (*n - mean[ch]) * inv_std[ch];
            *o = scale[ch] * *n + shift[ch];
        }
        normalized.push(xn);
        outputs.push(y);
    }
    Ok((
        outputs,
        BatchNormCache {
            normalized,
            inv_std,
            batch_stats: training,
        },
    ))
}

/// Accumulates scale/shift gradients and returns the input gradients.
pub fn batchnorm_backward(
    cache: &BatchNormCache,
    scale: &[f64],
    grads: &[Tensor3],
    grad_scale: &mut [f64],
    grad_shift: &mut [f64],
) -> Vec<Tensor3> {
    let c = scale.len();
    let mut sum_g = vec![0.0; c];
    let mut sum_gx = vec![0.0; c];
    let mut count = 0usize;
    for (g, xn) in grads.iter().zip(&cache.normalized) {
        for (k, (gv, xv)) in g.as_slice().iter().zip(xn.as_slice()).enumerate() {
            let ch = k % c;
            sum_g[ch] += gv;
            sum_gx[ch] += gv * xv;
        }
        count += g.as_slice().len() / c;
    }
    for ch in 0..c {
        grad_shift[ch] += sum_g[ch];
        grad_scale[ch] += sum_gx[ch];
    }
    let n = count as f64;
    grads
        .iter()
        .zip(&cache.normalized)
        .map(|(g, xn)| {
            let mut out = g.clone();
            for (k, (o, xv)) in out.as_mut_slice().iter_mut().zip(xn.as_slice()).enumerate() {
                let ch = k % c;
                let gn = *o * scale[ch];
                *o = if cache.batch_stats {
                    // dx = inv_std · (dx̂ − mean(dx̂) − x̂ · mean(dx̂ · x̂))
                    cache.inv_std[ch] * (gn - scale[ch] * sum_g[ch] / n - xv * scale[ch] * sum_gx[ch] / n)
                } else {
                    gn * cache.inv_std[ch]
                };
            }
            out
        })
        .collect()
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn activate(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Identity => x,
        Activation::Relu => relu(x),
        Activation::Tanh => x.tanh(),
        Activation::Sigmoid => sigmoid(x),
    }
}

/// Derivative of the activation expressed through its input `x` and
/// output `y`.
pub fn activation_derivative(act: Activation, x: f64, y: f64) -> f64 {
    match act {
        Activation::Identity => 1.0,
        Activation::Relu => {
            if x > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => 1.0 - y * y,
        Activation::Sigmoid => y * (1.0 - y),
    }
}

pub fn activation_forward(act: Activation, x: &Tensor3) -> Tensor3 {
    x.map(|v| activate(act, v))
}

pub fn activation_backward(act: Activation, x: &Tensor3, y: &Tensor3, grad: &Tensor3) -> Tensor3 {
    let mut out = grad.clone();
    for ((g, xv), yv) in out.as_mut_slice().iter_mut().zip(x.as_slice()).zip(y.as_slice()) {
        *g *= activation_derivative(act, *xv, *yv);
    }
    out
}
