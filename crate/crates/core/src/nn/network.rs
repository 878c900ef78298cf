use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{self, BatchNorm, BatchNormCache, Mode};
use super::loss::{softmax, softmax_cross_entropy};
use super::Tensor;
use crate::error::{Error, Result};
use crate::seed::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv3x3 { out_channels: usize },
    BatchNorm,
    Relu,
    MaxPool2x2,
    /// Fully connected over the flattened input.
    Dense { outputs: usize },
}

/// Layer list plus input geometry `(channels, height, width)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: (usize, usize, usize),
    pub layers: Vec<LayerSpec>,
}

impl Default for NetworkSpec {
    /// Three conv/bn/relu/pool blocks with 8, 16 and 32 channels on a
    /// 512x512 single-channel input, then a 131072 -> 2 dense layer.
    fn default() -> Self {
        Self::conv_blocks((512, 512), &[8, 16, 32], 2)
    }
}

/// One row of the shape ledger: layer name and output shape as
/// `(height, width, channels)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeRow {
    pub name: String,
    pub shape: (usize, usize, usize),
}

impl NetworkSpec {
    /// `channels.len()` blocks of conv 3x3, batch norm, ReLU and 2x2 max
    /// pooling followed by a dense classifier.
    pub fn conv_blocks(input_hw: (usize, usize), channels: &[usize], classes: usize) -> Self {
        let mut layers = Vec::new();
        for &c in channels {
            layers.extend([
                LayerSpec::Conv3x3 { out_channels: c },
                LayerSpec::BatchNorm,
                LayerSpec::Relu,
                LayerSpec::MaxPool2x2,
            ]);
        }
        layers.push(LayerSpec::Dense { outputs: classes });
        Self {
            input: (1, input_hw.0, input_hw.1),
            layers,
        }
    }

    /// Stable 64-bit digest of the spec.
    pub fn hash(&self) -> u64 {
        fnv1a64(serde_json::to_string(self).expect("spec serializes").as_bytes())
    }

    /// Output shape of every layer, derived from the spec alone.
    pub fn shape_ledger(&self) -> Result<Vec<ShapeRow>> {
        let (mut c, mut h, mut w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("network input dimensions must be positive"));
        }
        let mut rows = Vec::new();
        let mut counts = [0usize; 5];
        let mut name = |kind: usize, label: &str| {
            counts[kind] += 1;
            format!("{label}{}", counts[kind])
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let label = match *layer {
                LayerSpec::Conv3x3 { out_channels } => {
                    if out_channels == 0 {
                        return Err(Error::invalid(format!("layer {i}: zero output channels")));
                    }
                    c = out_channels;
                    name(0, "Convolution")
                }
                LayerSpec::BatchNorm => name(1, "Batch Normalization"),
                LayerSpec::Relu => name(2, "ReLU"),
                LayerSpec::MaxPool2x2 => {
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(Error::invalid(format!(
                            "layer {i}: cannot pool a {h}x{w} map"
                        )));
                    }
                    h /= 2;
                    w /= 2;
                    name(3, "Max Pooling")
                }
                LayerSpec::Dense { outputs } => {
                    if outputs == 0 {
                        return Err(Error::invalid(format!("layer {i}: zero outputs")));
                    }
                    c = outputs;
                    h = 1;
                    w = 1;
                    name(4, "Fully Connected")
                }
            };
            rows.push(ShapeRow { name: label, shape: (h, w, c) });
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { outputs: 2 })) {
            return Err(Error::invalid("network must end in a dense layer with 2 outputs"));
        }
        rows.push(ShapeRow {
            name: "Classification Output".into(),
            shape: (1, 1, 2),
        });
        Ok(rows)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv { weights: Tensor, bias: Tensor },
    BatchNorm(BatchNorm),
    Relu,
    MaxPool,
    Dense { weights: Tensor, bias: Tensor },
}

/// Values kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub enum Cache {
    Conv { input: Tensor },
    BatchNormTrain(BatchNormCache),
    BatchNormInfer { normalized: Tensor, inv_std: Vec<f64> },
    Relu { input: Tensor },
    Pool { argmax: Vec<usize>, input_shape: Vec<usize> },
    Dense { input: Tensor },
}

/// Per-batch loss and parameter gradients (in [`Network::params`] order).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub grads: Vec<Tensor>,
    pub correct: usize,
    pub caches: Vec<Cache>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    initialized: bool,
}

impl Network {
    /// Allocates zeroed parameters. The network must be initialized (or
    /// loaded from a checkpoint) before use.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.shape_ledger()?;
        let (mut c, mut h, mut w) = spec.input;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            layers.push(match *layer {
                LayerSpec::Conv3x3 { out_channels } => {
                    let l = Layer::Conv {
                        weights: Tensor::zeros(&[out_channels, c, 3, 3]),
                        bias: Tensor::zeros(&[out_channels]),
                    };
                    c = out_channels;
                    l
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(c)),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool2x2 => {
                    h /= 2;
                    w /= 2;
                    Layer::MaxPool
                }
                LayerSpec::Dense { outputs } => {
                    let l = Layer::Dense {
                        weights: Tensor::zeros(&[outputs, c * h * w]),
                        bias: Tensor::zeros(&[outputs]),
                    };
                    (c, h, w) = (outputs, 1, 1);
                    l
                }
            });
        }
        Ok(Self {
            spec,
            layers,
            initialized: false,
        })
    }

    /// Weights from `N(0, std)`, biases zero, batch-norm scale 1 and offset 0.
    pub fn initialize(&mut self, rng: &mut impl Rng, std: f64) -> Result<()> {
        let normal = Normal::new(0.0, std)
            .map_err(|e| Error::invalid(format!("bad initializer std {std}: {e}")))?;
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { weights, bias } | Layer::Dense { weights, bias } => {
                    weights.data_mut().iter_mut().for_each(|v| *v = normal.sample(rng));
                    bias.data_mut().fill(0.0);
                }
                Layer::BatchNorm(bn) => *bn = BatchNorm::new(bn.gamma.len()),
                Layer::Relu | Layer::MaxPool => {}
            }
        }
        self.initialized = true;
        Ok(())
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub(crate) fn mark_initialized(&mut self) {
        self.initialized = true;
    }

    /// Trainable tensors: conv/dense weights and biases, batch-norm scale
    /// and offset, in layer order.
    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { weights, bias } | Layer::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                }
                Layer::Relu | Layer::MaxPool => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { weights, bias } | Layer::Dense { weights, bias } => {
                    out.push(weights);
                    out.push(bias);
                }
                Layer::BatchNorm(bn) => {
                    out.push(&mut bn.gamma);
                    out.push(&mut bn.beta);
                }
                Layer::Relu | Layer::MaxPool => {}
            }
        }
        out
    }

    /// Non-trainable state: batch-norm running mean and variance.
    pub fn buffers(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::BatchNorm(bn) => Some([&bn.running_mean, &bn.running_var]),
                _ => None,
            })
            .flatten()
            .collect()
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::BatchNorm(bn) = l {
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn check_ready(&self) -> Result<()> {
        if self.initialized {
            Ok(())
        } else {
            Err(Error::InvalidState("network parameters are not initialized".into()))
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let (n, c, h, w) = x.dims4()?;
        if (c, h, w) != self.spec.input || n == 0 {
            return Err(Error::invalid(format!(
                "input batch {:?} does not match network input {:?}",
                x.shape(),
                self.spec.input
            )));
        }
        Ok(n)
    }

    /// Runs the network, returning logits `[batch, 2]` and the caches needed
    /// by [`Network::backward`]. Batch-norm running statistics are not
    /// modified; see [`Network::update_running_stats`].
    pub fn forward(&self, x: &Tensor, mode: Mode) -> Result<(Tensor, Vec<Cache>)> {
        self.forward_observed(x, mode, |_| {})
    }

    fn forward_observed(
        &self,
        x: &Tensor,
        mode: Mode,
        mut observe: impl FnMut(&Tensor),
    ) -> Result<(Tensor, Vec<Cache>)> {
        self.check_ready()?;
        self.check_input(x)?;
        let mut act = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, cache) = match layer {
                Layer::Conv { weights, bias } => {
                    let y = layers::conv2d_forward(&act, weights, bias)?;
                    (y, Cache::Conv { input: act })
                }
                Layer::BatchNorm(bn) => match mode {
                    Mode::Train => {
                        let (y, c) = layers::batchnorm_train(&act, &bn.gamma, &bn.beta, bn.epsilon)?;
                        (y, Cache::BatchNormTrain(c))
                    }
                    Mode::Infer => {
                        let y = layers::batchnorm_infer(
                            &act,
                            &bn.gamma,
                            &bn.beta,
                            &bn.running_mean,
                            &bn.running_var,
                            bn.epsilon,
                        )?;
                        let zero = Tensor::zeros(&[bn.gamma.len()]);
                        let one = Tensor::filled(&[bn.gamma.len()], 1.0);
                        let normalized = layers::batchnorm_infer(
                            &act,
                            &one,
                            &zero,
                            &bn.running_mean,
                            &bn.running_var,
                            bn.epsilon,
                        )?;
                        let inv_std = bn
                            .running_var
                            .data()
                            .iter()
                            .map(|v| 1.0 / (v + bn.epsilon).sqrt())
                            .collect();
                        (y, Cache::BatchNormInfer { normalized, inv_std })
                    }
                },
                Layer::Relu => (layers::relu(&act), Cache::Relu { input: act }),
                Layer::MaxPool => {
                    let (y, argmax) = layers::maxpool2x2(&act)?;
                    let input_shape = act.shape().to_vec();
                    (y, Cache::Pool { argmax, input_shape })
                }
                Layer::Dense { weights, bias } => {
                    let y = layers::dense_forward(&act, weights, bias)?;
                    (y, Cache::Dense { input: act })
                }
            };
            observe(&next);
            caches.push(cache);
            act = next;
        }
        Ok((act, caches))
    }

    /// Gradients of all parameters given the loss gradient at the logits.
    pub fn backward(&self, caches: &[Cache], grad_logits: &Tensor) -> Result<Vec<Tensor>> {
        self.check_ready()?;
        if caches.len() != self.layers.len() {
            return Err(Error::InvalidState("cache does not match the network".into()));
        }
        let mut grads_rev: Vec<Tensor> = Vec::new();
        let mut g = grad_logits.clone();
        for (layer, cache) in self.layers.iter().zip(caches).rev() {
            g = match (layer, cache) {
                (Layer::Conv { weights, .. }, Cache::Conv { input }) => {
                    let (gi, gw, gb) = layers::conv2d_backward(input, weights, &g)?;
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    gi
                }
                (Layer::BatchNorm(bn), Cache::BatchNormTrain(c)) => {
                    let (gi, gg, gbt) = layers::batchnorm_train_backward(c, &bn.gamma, &g)?;
                    grads_rev.push(gbt);
                    grads_rev.push(gg);
                    gi
                }
                (Layer::BatchNorm(bn), Cache::BatchNormInfer { normalized, inv_std }) => {
                    // fixed statistics: y = gamma * xhat + beta, xhat affine in x
                    let (n, c, h, w) = g.dims4()?;
                    let plane = h * w;
                    let mut gi = g.clone();
                    let mut gg = vec![0.0; c];
                    let mut gbt = vec![0.0; c];
                    for b in 0..n {
                        for ch in 0..c {
                            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                            let k = bn.gamma.data()[ch] * inv_std[ch];
                            for (v, xn) in gi.data_mut()[r.clone()].iter_mut().zip(&normalized.data()[r]) {
                                gg[ch] += *v * xn;
                                gbt[ch] += *v;
                                *v *= k;
                            }
                        }
                    }
                    grads_rev.push(Tensor::from_vec(&[c], gbt)?);
                    grads_rev.push(Tensor::from_vec(&[c], gg)?);
                    gi
                }
                (Layer::Relu, Cache::Relu { input }) => layers::relu_backward(input, &g),
                (Layer::MaxPool, Cache::Pool { argmax, input_shape }) => {
                    layers::maxpool2x2_backward(&g, argmax, input_shape)
                }
                (Layer::Dense { weights, .. }, Cache::Dense { input }) => {
                    let (gi, gw, gb) = layers::dense_backward(input, weights, &g);
                    grads_rev.push(gb);
                    grads_rev.push(gw);
                    gi
                }
                _ => return Err(Error::InvalidState("cache does not match layer".into())),
            };
        }
        grads_rev.reverse();
        Ok(grads_rev)
    }

    /// Mean weighted cross-entropy over the batch and its parameter
    /// gradients, from a training-mode forward pass.
    pub fn gradients(
        &self,
        batch: &Tensor,
        labels: &[usize],
        class_weights: (f64, f64),
    ) -> Result<Gradients> {
        self.check_ready()?;
        let n = self.check_input(batch)?;
        if labels.len() != n {
            return Err(Error::invalid(format!("{} labels for a batch of {n}", labels.len())));
        }
        let (logits, caches) = self.forward(batch, Mode::Train)?;
        let (loss, grad_logits, correct) = batch_loss(&logits, labels, class_weights)?;
        let grads = self.backward(&caches, &grad_logits)?;
        Ok(Gradients {
            loss,
            grads,
            correct,
            caches,
        })
    }

    /// Folds the batch statistics recorded in `caches` into the running
    /// averages.
    pub fn update_running_stats(&mut self, caches: &[Cache]) {
        for (layer, cache) in self.layers.iter_mut().zip(caches) {
            if let (Layer::BatchNorm(bn), Cache::BatchNormTrain(c)) = (layer, cache) {
                bn.update_running(c);
            }
        }
    }

    /// Replaces every batch-norm layer's running statistics with the exact
    /// population mean and (biased) variance of its input over all batches
    /// produced by `batch(0..count)`.
    ///
    /// Layers are finalized front to back, so each one sees inputs computed
    /// with the already-finalized statistics of the layers before it, as it
    /// will at inference time. Batches are regenerated on every pass rather
    /// than held in memory.
    pub fn recompute_batch_norm_stats(
        &mut self,
        count: usize,
        mut batch: impl FnMut(usize) -> Tensor,
    ) -> Result<()> {
        self.check_ready()?;
        if count == 0 {
            return Err(Error::invalid("no batches to estimate batch-norm statistics from"));
        }
        let targets: Vec<usize> = (0..self.layers.len())
            .filter(|&i| matches!(self.layers[i], Layer::BatchNorm(_)))
            .collect();
        for k in targets {
            // Chan's pairwise combination of per-batch (count, mean, M2).
            let mut total = 0.0;
            let mut mean: Vec<f64> = Vec::new();
            let mut m2: Vec<f64> = Vec::new();
            for b in 0..count {
                let x = batch(b);
                let mut input = None;
                let mut layer = 0;
                if k == 0 {
                    input = Some(x.clone());
                } else {
                    self.forward_observed(&x, Mode::Infer, |t| {
                        layer += 1;
                        if layer == k {
                            input = Some(t.clone());
                        }
                    })?;
                }
                let input = input.expect("layer index within the network");
                let (n, c, h, w) = input.dims4()?;
                let plane = h * w;
                let m = (n * plane) as f64;
                if mean.is_empty() {
                    mean = vec![0.0; c];
                    m2 = vec![0.0; c];
                }
                let data = input.data();
                for ch in 0..c {
                    let values = (0..n).flat_map(|s| &data[(s * c + ch) * plane..(s * c + ch + 1) * plane]);
                    let bm = values.clone().sum::<f64>() / m;
                    let bm2: f64 = values.map(|v| (v - bm).powi(2)).sum();
                    let delta = bm - mean[ch];
                    let combined = total + m;
                    mean[ch] += delta * m / combined;
                    m2[ch] += bm2 + delta * delta * total * m / combined;
                }
                total += m;
            }
            if let Layer::BatchNorm(bn) = &mut self.layers[k] {
                bn.running_mean.data_mut().copy_from_slice(&mean);
                for (r, v) in bn.running_var.data_mut().iter_mut().zip(&m2) {
                    *r = v / total;
                }
            }
        }
        Ok(())
    }

    /// Softmax probabilities `[batch][2]` in inference mode.
    pub fn predict_proba(&self, x: &Tensor) -> Result<Vec<[f64; 2]>> {
        let (logits, _) = self.forward(x, Mode::Infer)?;
        Ok(logits
            .data()
            .chunks(2)
            .map(|l| {
                let p = softmax(l);
                [p[0], p[1]]
            })
            .collect())
    }

    /// Output shape of every layer, observed on a real inference pass over
    /// `x`, named as in [`NetworkSpec::shape_ledger`].
    pub fn observed_shapes(&self, x: &Tensor) -> Result<Vec<ShapeRow>> {
        let mut shapes = Vec::new();
        let (logits, _) = self.forward_observed(x, Mode::Infer, |t| {
            shapes.push(match t.shape() {
                [_, c, h, w] => (*h, *w, *c),
                [_, c] => (1, 1, *c),
                s => panic!("unexpected activation rank {s:?}"),
            })
        })?;
        let probs = softmax(&logits.data()[..logits.shape()[1]]);
        shapes.push((1, 1, probs.len()));
        let ledger = self.spec.shape_ledger()?;
        Ok(ledger
            .into_iter()
            .zip(shapes)
            .map(|(row, shape)| ShapeRow { name: row.name, shape })
            .collect())
    }
}

/// Mean weighted cross-entropy over a `[batch, 2]` logit tensor, with the
/// gradient and the number of correct argmax predictions.
pub fn batch_loss(
    logits: &Tensor,
    labels: &[usize],
    class_weights: (f64, f64),
) -> Result<(f64, Tensor, usize)> {
    let n = labels.len();
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0;
    let mut correct = 0;
    for (b, &label) in labels.iter().enumerate() {
        let l = &logits.data()[2 * b..2 * b + 2];
        let (sample_loss, g) = softmax_cross_entropy(l, label, class_weights)?;
        loss += sample_loss;
        let predicted = usize::from(l[1] > l[0]);
        correct += usize::from(predicted == label);
        for (k, gv) in g.iter().enumerate() {
            grad.data_mut()[2 * b + k] = gv / n as f64;
        }
    }
    Ok((loss / n as f64, grad, correct))
}
