//! Forward and backward kernels for the network's layer types.
//!
//! Activations are `[batch, channels, height, width]`; convolution weights
//! are `[out_channels, in_channels, 3, 3]`; dense weights are
//! `[outputs, inputs]`.

use super::Tensor;
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the previous running statistic in the exponential average.
pub const BN_DECAY: f64 = 0.9;

/// Runs `f(dst, src, w)` over every in-bounds row segment of a 3x3 stencil
/// tap at offset `(dy, dx)` for an `h` x `w` plane.
#[inline]
fn for_each_shift(h: usize, w: usize, dy: isize, dx: isize, mut f: impl FnMut(usize, usize, usize)) {
    let y_lo = (-dy).max(0) as usize;
    let y_hi = (h as isize - dy).min(h as isize).max(0) as usize;
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
    if x_lo >= x_hi {
        return;
    }
    for y in y_lo..y_hi {
        let out_row = y * w;
        let in_row = (y as isize + dy) as usize * w;
        f(out_row + x_lo, (in_row as isize + x_lo as isize + dx) as usize, x_hi - x_lo);
    }
}

fn check_conv(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    let (o, wc, kh, kw) = weights.dims4()?;
    if wc != c || kh != 3 || kw != 3 {
        return Err(Error::invalid(format!(
            "conv weights {:?} incompatible with input {:?} (need [out, {c}, 3, 3])",
            weights.shape(),
            input.shape()
        )));
    }
    if bias.len() != o {
        return Err(Error::invalid(format!("conv bias has {} entries, expected {o}", bias.len())));
    }
    Ok((n, c, h, w, o))
}

/// 3x3 cross-correlation, stride 1, zero "same" padding, plus per-channel bias.
pub fn conv2d_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (n, c, h, w, o) = check_conv(input, weights, bias)?;
    let plane = h * w;
    let mut out = Tensor::zeros(&[n, o, h, w]);
    let x = input.data();
    let k = weights.data();
    let out_data = out.data_mut();
    for b in 0..n {
        for oc in 0..o {
            let dst = &mut out_data[(b * o + oc) * plane..(b * o + oc + 1) * plane];
            dst.fill(bias.data()[oc]);
            for ic in 0..c {
                let src = &x[(b * c + ic) * plane..(b * c + ic + 1) * plane];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let wv = k[((oc * c + ic) * 3 + ky) * 3 + kx];
                        for_each_shift(h, w, ky as isize - 1, kx as isize - 1, |d, s, len| {
                            for (dv, sv) in dst[d..d + len].iter_mut().zip(&src[s..s + len]) {
                                *dv += wv * sv;
                            }
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn conv2d_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, h, w) = input.dims4()?;
    let (o, _, _, _) = weights.dims4()?;
    if grad_out.shape() != [n, o, h, w] {
        return Err(Error::invalid("conv output gradient has the wrong shape"));
    }
    let plane = h * w;
    let mut gi = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[o]);
    let x = input.data();
    let k = weights.data();
    let g = grad_out.data();
    for b in 0..n {
        for oc in 0..o {
            let gplane = &g[(b * o + oc) * plane..(b * o + oc + 1) * plane];
            gb.data_mut()[oc] += gplane.iter().sum::<f64>();
            for ic in 0..c {
                let base = (b * c + ic) * plane;
                let src = &x[base..base + plane];
                for ky in 0..3 {
                    for kx in 0..3 {
                        let widx = ((oc * c + ic) * 3 + ky) * 3 + kx;
                        let wv = k[widx];
                        let gin = &mut gi.data_mut()[base..base + plane];
                        let mut acc = 0.0;
                        for_each_shift(h, w, ky as isize - 1, kx as isize - 1, |d, s, len| {
                            for ((gv, sv), giv) in gplane[d..d + len]
                                .iter()
                                .zip(&src[s..s + len])
                                .zip(&mut gin[s..s + len])
                            {
                                acc += gv * sv;
                                *giv += wv * gv;
                            }
                        });
                        gw.data_mut()[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((gi, gw, gb))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Intermediate values of a training-mode batch-norm pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
}

fn check_bn(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = input.dims4()?;
    if n == 0 || h * w == 0 {
        return Err(Error::invalid("batch norm over an empty batch"));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(Error::invalid(format!(
            "batch norm expects {c} scale/offset entries, got {}/{}",
            gamma.len(),
            beta.len()
        )));
    }
    Ok((n, c, h * w))
}

/// Normalizes with per-channel batch statistics (biased variance).
pub fn batchnorm_train(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    epsilon: f64,
) -> Result<(Tensor, BatchNormCache)> {
    let (n, c, plane) = check_bn(input, gamma, beta)?;
    let m = (n * plane) as f64;
    let x = input.data();
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let s = &x[(b * c + ch) * plane..(b * c + ch + 1) * plane];
            mean[ch] += s.iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|v| *v /= m);
    for b in 0..n {
        for ch in 0..c {
            let s = &x[(b * c + ch) * plane..(b * c + ch + 1) * plane];
            var[ch] += s.iter().map(|v| (v - mean[ch]).powi(2)).sum::<f64>();
        }
    }
    var.iter_mut().for_each(|v| *v /= m);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
    let mut normalized = Tensor::zeros(input.shape());
    let mut out = Tensor::zeros(input.shape());
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let (g, bt) = (gamma.data()[ch], beta.data()[ch]);
            for ((xn, o), v) in normalized.data_mut()[r.clone()]
                .iter_mut()
                .zip(&mut out.data_mut()[r.clone()])
                .zip(&x[r])
            {
                *xn = (v - mean[ch]) * inv_std[ch];
                *o = g * *xn + bt;
            }
        }
    }
    Ok((
        out,
        BatchNormCache {
            normalized,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    ))
}

/// Normalizes with fixed statistics.
pub fn batchnorm_infer(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    mean: &Tensor,
    var: &Tensor,
    epsilon: f64,
) -> Result<Tensor> {
    let (n, c, plane) = check_bn(input, gamma, beta)?;
    let mut out = Tensor::zeros(input.shape());
    let x = input.data();
    for b in 0..n {
        for ch in 0..c {
            let scale = gamma.data()[ch] / (var.data()[ch] + epsilon).sqrt();
            let shift = beta.data()[ch] - mean.data()[ch] * scale;
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for (o, v) in out.data_mut()[r.clone()].iter_mut().zip(&x[r]) {
                *o = v * scale + shift;
            }
        }
    }
    Ok(out)
}

/// Backward pass of [`batchnorm_train`]: `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_train_backward(
    cache: &BatchNormCache,
    gamma: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, c, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let m = (n * plane) as f64;
    let g = grad_out.data();
    let xn = cache.normalized.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for (gv, xv) in g[r.clone()].iter().zip(&xn[r]) {
                dgamma[ch] += gv * xv;
                dbeta[ch] += gv;
            }
        }
    }
    // dx = gamma * inv_std / m * (m * g - sum(g) - xhat * sum(g * xhat))
    let mut gi = Tensor::zeros(grad_out.shape());
    for b in 0..n {
        for ch in 0..c {
            let k = gamma.data()[ch] * cache.inv_std[ch] / m;
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            for ((o, gv), xv) in gi.data_mut()[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xn[r]) {
                *o = k * (m * gv - dbeta[ch] - xv * dgamma[ch]);
            }
        }
    }
    Ok((
        gi,
        Tensor::from_vec(&[c], dgamma)?,
        Tensor::from_vec(&[c], dbeta)?,
    ))
}

/// Batch normalization layer with running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub epsilon: f64,
    pub decay: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[channels], 1.0),
            beta: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            epsilon: BN_EPSILON,
            decay: BN_DECAY,
        }
    }

    pub fn update_running(&mut self, cache: &BatchNormCache) {
        let d = self.decay;
        for (r, b) in self.running_mean.data_mut().iter_mut().zip(&cache.batch_mean) {
            *r = d * *r + (1.0 - d) * b;
        }
        for (r, b) in self.running_var.data_mut().iter_mut().zip(&cache.batch_var) {
            *r = d * *r + (1.0 - d) * b;
        }
    }

    /// Train mode uses and folds in the batch statistics; infer mode uses the
    /// running statistics.
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Train => {
                let (out, cache) = batchnorm_train(input, &self.gamma, &self.beta, self.epsilon)?;
                self.update_running(&cache);
                Ok(out)
            }
            Mode::Infer => batchnorm_infer(
                input,
                &self.gamma,
                &self.beta,
                &self.running_mean,
                &self.running_var,
                self.epsilon,
            ),
        }
    }
}

/// Element-wise `max(0, x)`.
pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| v.max(0.0))
}

/// Passes gradient where the forward input was positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Non-overlapping 2x2 max pooling. Also returns, for every output element,
/// the flat input index of the selected maximum (first on ties).
pub fn maxpool2x2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::invalid(format!("max pooling needs even spatial dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]);
    let mut argmax = vec![0usize; n * c * oh * ow];
    let x = input.data();
    let mut k = 0;
    for p in 0..n * c {
        let base = p * h * w;
        for y in 0..oh {
            for xx in 0..ow {
                let i0 = base + 2 * y * w + 2 * xx;
                let mut best = i0;
                for i in [i0 + 1, i0 + w, i0 + w + 1] {
                    if x[i] > x[best] {
                        best = i;
                    }
                }
                out.data_mut()[k] = x[best];
                argmax[k] = best;
                k += 1;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2x2_backward(grad_out: &Tensor, argmax: &[usize], input_shape: &[usize]) -> Tensor {
    let mut gi = Tensor::zeros(input_shape);
    for (g, &i) in grad_out.data().iter().zip(argmax) {
        gi.data_mut()[i] += g;
    }
    gi
}

/// `out[b] = W x[b] + bias` on inputs flattened to `[batch, features]`.
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = input.shape()[0];
    let f = input.len() / n.max(1);
    let (o, wf) = match weights.shape() {
        [o, wf] => (*o, *wf),
        s => return Err(Error::invalid(format!("dense weights must be 2-D, got {s:?}"))),
    };
    if wf != f || bias.len() != o {
        return Err(Error::invalid(format!(
            "dense layer {o}x{wf} incompatible with {f} input features"
        )));
    }
    let mut out = Tensor::zeros(&[n, o]);
    for b in 0..n {
        let xin = &input.data()[b * f..(b + 1) * f];
        for j in 0..o {
            let row = &weights.data()[j * f..(j + 1) * f];
            out.data_mut()[b * o + j] =
                bias.data()[j] + row.iter().zip(xin).map(|(w, x)| w * x).sum::<f64>();
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_weights, grad_bias)`; `grad_input` has the
/// original (unflattened) input shape.
pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let n = input.shape()[0];
    let f = input.len() / n.max(1);
    let o = weights.shape()[0];
    let mut gi = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weights.shape());
    let mut gb = Tensor::zeros(&[o]);
    for b in 0..n {
        let xin = &input.data()[b * f..(b + 1) * f];
        for j in 0..o {
            let g = grad_out.data()[b * o + j];
            gb.data_mut()[j] += g;
            let row = &weights.data()[j * f..(j + 1) * f];
            for (gwv, x) in gw.data_mut()[j * f..(j + 1) * f].iter_mut().zip(xin) {
                *gwv += g * x;
            }
            for (giv, w) in gi.data_mut()[b * f..(b + 1) * f].iter_mut().zip(row) {
                *giv += g * w;
            }
        }
    }
    (gi, gw, gb)
}
