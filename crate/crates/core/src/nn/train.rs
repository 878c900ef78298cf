use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{batch_loss, class_weights_from_frequencies, sgdm_step, Checkpoint, Mode, Network, NetworkSpec, Tensor};
use crate::error::{Error, Result};
use crate::imageio::LabeledDataset;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// `(benign, malignant)` loss weights; `None` derives them from the
    /// training-set class frequencies.
    pub class_weights: Option<(f64, f64)>,
    /// Iterations between validation passes.
    pub validation_frequency: usize,
    /// Multiplier applied every `lr_drop_period` epochs; 0 disables the schedule.
    pub lr_drop_factor: f64,
    pub lr_drop_period: usize,
    /// Standard deviation of the normal weight initializer.
    pub init_std: f64,
    /// After the last epoch, replace the exponential running averages of
    /// every batch-norm layer with exact statistics over the training set.
    /// With small batches the running averages can lag far behind the final
    /// weights, which skews inference-mode predictions.
    pub population_batch_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 64,
            max_epochs: 30,
            seed: 0,
            class_weights: None,
            validation_frequency: 50,
            lr_drop_factor: 0.0,
            lr_drop_period: 10,
            init_std: 0.01,
            population_batch_norm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be >= 1"));
        }
        if self.validation_frequency == 0 {
            return Err(Error::invalid("validation frequency must be >= 1"));
        }
        if let Some((a, b)) = self.class_weights {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::invalid("class weights must be positive"));
            }
        }
        if !(self.init_std > 0.0) {
            return Err(Error::invalid("initializer std must be positive"));
        }
        if self.lr_drop_factor < 0.0 || (self.lr_drop_factor > 0.0 && self.lr_drop_period == 0) {
            return Err(Error::invalid("invalid learning-rate schedule"));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.lr_drop_factor > 0.0 {
            self.learning_rate * self.lr_drop_factor.powi((epoch / self.lr_drop_period) as i32)
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub split: Split,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub checkpoint: Checkpoint,
    pub curves: Vec<CurvePoint>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Fraction of training samples classified correctly during each epoch.
    pub epoch_accuracies: Vec<f64>,
    pub class_weights: (f64, f64),
}

/// Flattened pixels and class indices, checked against the network input.
fn tensors_of(dataset: &LabeledDataset, spec: &NetworkSpec) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let (c, h, w) = spec.input;
    if c != 1 {
        return Err(Error::invalid("datasets provide single-channel inputs only"));
    }
    let mut xs = Vec::with_capacity(dataset.len());
    let mut ys = Vec::with_capacity(dataset.len());
    for item in &dataset.items {
        if (item.image.height(), item.image.width()) != (h, w) {
            return Err(Error::invalid(format!(
                "image from {} is {}x{}, network expects {h}x{w}",
                item.source_id,
                item.image.height(),
                item.image.width()
            )));
        }
        let px = item.image.normalized().ok_or_else(|| {
            Error::InvalidState(format!("image from {} is not normalized", item.source_id))
        })?;
        xs.push(px.to_vec());
        ys.push(item.label.index());
    }
    Ok((xs, ys))
}

fn batch_tensor(xs: &[Vec<f64>], idx: &[usize], spec: &NetworkSpec) -> Tensor {
    let (c, h, w) = spec.input;
    let mut data = Vec::with_capacity(idx.len() * c * h * w);
    for &i in idx {
        data.extend_from_slice(&xs[i]);
    }
    Tensor::from_vec(&[idx.len(), c, h, w], data).expect("sizes checked")
}

/// Softmax probabilities for every item, in inference mode.
pub fn predict(network: &Network, dataset: &LabeledDataset) -> Result<Vec<[f64; 2]>> {
    let (xs, _) = tensors_of(dataset, network.spec())?;
    let idx: Vec<usize> = (0..xs.len()).collect();
    let mut out = Vec::with_capacity(xs.len());
    for chunk in idx.chunks(64) {
        out.extend(network.predict_proba(&batch_tensor(&xs, chunk, network.spec()))?);
    }
    Ok(out)
}

fn validation_point(
    network: &Network,
    xs: &[Vec<f64>],
    ys: &[usize],
    weights: (f64, f64),
    iteration: usize,
) -> Result<CurvePoint> {
    let idx: Vec<usize> = (0..xs.len()).collect();
    let mut loss = 0.0;
    let mut correct = 0;
    for chunk in idx.chunks(64) {
        let (logits, _) = network.forward(&batch_tensor(xs, chunk, network.spec()), Mode::Infer)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
        let (l, _, c) = batch_loss(&logits, &labels, weights)?;
        loss += l * chunk.len() as f64;
        correct += c;
    }
    Ok(CurvePoint {
        iteration,
        loss: loss / xs.len() as f64,
        accuracy: correct as f64 / xs.len() as f64,
        split: Split::Validation,
    })
}

/// Mini-batch SGD with momentum on the weighted cross-entropy.
///
/// Each epoch visits the training set in a fresh seeded permutation; the
/// final short batch is kept. Runs are bit-reproducible for a fixed seed.
pub fn train(
    dataset: &LabeledDataset,
    validation: Option<&LabeledDataset>,
    spec: &NetworkSpec,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let (xs, ys) = tensors_of(dataset, spec)?;
    let val = validation
        .filter(|v| !v.is_empty())
        .map(|v| tensors_of(v, spec))
        .transpose()?;
    let weights = match config.class_weights {
        Some(w) => w,
        None => class_weights_from_frequencies(dataset.class_counts())?,
    };

    let mut network = Network::new(spec.clone())?;
    network.initialize(&mut seed::rng(seed::stage_seed(config.seed, "init")), config.init_std)?;
    let mut velocities: Vec<Tensor> = network.params().iter().map(|p| Tensor::zeros(p.shape())).collect();
    let shuffle_seed = seed::stage_seed(config.seed, "shuffle");

    let mut curves = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.max_epochs);
    let mut epoch_accuracies = Vec::with_capacity(config.max_epochs);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut iteration = 0;
    for epoch in 0..config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut seed::item_rng(shuffle_seed, epoch as u64));
        let lr = config.learning_rate_at(epoch);
        let mut loss_sum = 0.0;
        let mut correct_sum = 0;
        for chunk in order.chunks(config.batch_size) {
            iteration += 1;
            let batch = batch_tensor(&xs, chunk, spec);
            let labels: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let g = network.gradients(&batch, &labels, weights)?;
            if !g.loss.is_finite() {
                return Err(Error::TrainingDivergence { iteration });
            }
            network.update_running_stats(&g.caches);
            sgdm_step(&mut network.params_mut(), &mut velocities, &g.grads, lr, config.momentum)?;
            loss_sum += g.loss * chunk.len() as f64;
            correct_sum += g.correct;
            curves.push(CurvePoint {
                iteration,
                loss: g.loss,
                accuracy: g.correct as f64 / chunk.len() as f64,
                split: Split::Train,
            });
            if let Some((vx, vy)) = &val {
                if iteration % config.validation_frequency == 0 {
                    curves.push(validation_point(&network, vx, vy, weights, iteration)?);
                }
            }
        }
        epoch_losses.push(loss_sum / xs.len() as f64);
        epoch_accuracies.push(correct_sum as f64 / xs.len() as f64);
    }
    if config.population_batch_norm && config.max_epochs > 0 {
        let chunks: Vec<Vec<usize>> = (0..xs.len()).collect::<Vec<_>>().chunks(64).map(<[usize]>::to_vec).collect();
        network.recompute_batch_norm_stats(chunks.len(), |b| batch_tensor(&xs, &chunks[b], spec))?;
    }
    if let Some((vx, vy)) = &val {
        if iteration % config.validation_frequency != 0 || iteration == 0 {
            curves.push(validation_point(&network, vx, vy, weights, iteration)?);
        }
    }
    let checkpoint = Checkpoint::capture(&network, &velocities, config.max_epochs as u64, config.seed);
    Ok(TrainOutcome {
        network,
        checkpoint,
        curves,
        epoch_losses,
        epoch_accuracies,
        class_weights: weights,
    })
}

/// CSV with columns `iteration,loss,accuracy,split`.
pub fn write_curves_csv<W: Write>(curves: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in curves {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
