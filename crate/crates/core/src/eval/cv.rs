use serde::{Deserialize, Serialize};

use super::{evaluate_scores, mean_sd, roc_auc, ConfusionMatrix, FoldPlan, MetricReport, RocCurve};
use crate::error::{Error, Result};
use crate::imageio::LabeledDataset;
use crate::nn::{predict, train, Checkpoint, NetworkSpec, TrainConfig};
use crate::seed;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvOptions {
    /// Also evaluate the augmented variants of held-out sources. By default
    /// only original images are validated.
    pub include_augmented_validation: bool,
}

/// One validated item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub source_id: String,
    pub original: bool,
    pub label: usize,
    /// Softmax probability of the malignant class.
    pub score: f64,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricReport,
    /// `None` when the validation fold holds a single class.
    pub roc: Option<RocCurve>,
    pub final_train_loss: f64,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub k: usize,
    pub plan_seed: u64,
    pub include_augmented_validation: bool,
    pub folds: Vec<FoldResult>,
    /// Confusion counts summed over folds and the metrics they imply.
    pub pooled_confusion: ConfusionMatrix,
    pub pooled_metrics: MetricReport,
    /// Per-metric mean and sample standard deviation over the folds where
    /// the metric is defined.
    pub mean: MetricReport,
    pub sd: MetricReport,
}

impl CvReport {
    /// Fold accuracies (percent) in fold order; undefined folds are skipped.
    pub fn fold_accuracies(&self) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.metrics.acc).collect()
    }

    /// All validation predictions, fold by fold.
    pub fn predictions(&self) -> impl Iterator<Item = &Prediction> {
        self.folds.iter().flat_map(|f| f.predictions.iter())
    }
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub report: CvReport,
    /// Final checkpoint of each fold's model, in fold order.
    pub checkpoints: Vec<Checkpoint>,
}

/// Training seed of fold `fold`, derived from the configured seed.
pub fn fold_seed(global: u64, fold: usize) -> u64 {
    seed::stage_seed(global, &format!("fold{fold}"))
}

fn aggregate(reports: &[MetricReport]) -> (MetricReport, MetricReport) {
    let mut mean = [None; MetricReport::FIELDS];
    let mut sd = [None; MetricReport::FIELDS];
    for i in 0..MetricReport::FIELDS {
        let values: Vec<f64> = reports.iter().filter_map(|r| r.values()[i]).collect();
        if !values.is_empty() {
            let (m, s) = mean_sd(&values);
            mean[i] = Some(m);
            sd[i] = s;
        }
    }
    (MetricReport::from_values(mean), MetricReport::from_values(sd))
}

/// Trains one model per fold on the other folds and evaluates the held-out
/// fold in inference mode. Folds run in order; fold `f` trains with seed
/// [`fold_seed`]`(config.seed, f)`.
pub fn cross_validate(
    dataset: &LabeledDataset,
    spec: &NetworkSpec,
    config: &TrainConfig,
    plan: &FoldPlan,
    options: &CvOptions,
) -> Result<CvOutcome> {
    config.validate()?;
    plan.check(dataset)?;
    let mut folds = Vec::with_capacity(plan.k);
    let mut checkpoints = Vec::with_capacity(plan.k);
    for fold in 0..plan.k {
        let tag = |e: Error| Error::Fold { fold, source: Box::new(e) };
        let (train_set, val_set) = plan
            .split(dataset, fold, options.include_augmented_validation)
            .map_err(tag)?;
        if val_set.is_empty() {
            return Err(tag(Error::invalid("validation fold is empty")));
        }
        let fold_config = TrainConfig { seed: fold_seed(config.seed, fold), ..config.clone() };
        let outcome = train(&train_set, None, spec, &fold_config).map_err(tag)?;
        let probs = predict(&outcome.network, &val_set).map_err(tag)?;
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let labels: Vec<usize> = val_set.items.iter().map(|i| i.label.index()).collect();
        let (confusion, metrics) = evaluate_scores(&scores, &labels).map_err(tag)?;
        let predictions = val_set
            .items
            .iter()
            .zip(&scores)
            .map(|(item, &score)| Prediction {
                source_id: item.source_id.clone(),
                original: item.original,
                label: item.label.index(),
                score,
                predicted: usize::from(score > 0.5),
            })
            .collect();
        folds.push(FoldResult {
            fold,
            train_size: train_set.len(),
            validation_size: val_set.len(),
            confusion,
            metrics,
            roc: roc_auc(&scores, &labels).ok(),
            final_train_loss: outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
            predictions,
        });
        checkpoints.push(outcome.checkpoint);
    }
    Ok(CvOutcome { report: summarize(plan, options, folds), checkpoints })
}

/// Builds the aggregate report from per-fold results (sorted by fold first).
pub fn summarize(plan: &FoldPlan, options: &CvOptions, mut folds: Vec<FoldResult>) -> CvReport {
    folds.sort_by_key(|f| f.fold);
    let pooled_confusion = folds
        .iter()
        .fold(ConfusionMatrix::default(), |acc, f| acc.merge(&f.confusion));
    let scores: Vec<f64> = folds.iter().flat_map(|f| f.predictions.iter().map(|p| p.score)).collect();
    let labels: Vec<usize> = folds.iter().flat_map(|f| f.predictions.iter().map(|p| p.label)).collect();
    let pooled_metrics = evaluate_scores(&scores, &labels)
        .map(|(_, m)| m)
        .unwrap_or_else(|_| super::compute_metrics(&pooled_confusion));
    let (mean, sd) = aggregate(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>());
    CvReport {
        k: plan.k,
        plan_seed: plan.seed,
        include_augmented_validation: options.include_augmented_validation,
        folds,
        pooled_confusion,
        pooled_metrics,
        mean,
        sd,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(acc: f64) -> MetricReport {
        MetricReport { acc: Some(acc), ..Default::default() }
    }

    #[test]
    fn aggregation_uses_sample_sd() {
        let (mean, sd) = aggregate(&[report(96.0), report(98.0)]);
        assert_eq!(mean.acc, Some(97.0));
        assert!((sd.acc.unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(mean.sen, None);
        let (mean, sd) = aggregate(&[report(93.5); 4]);
        assert_eq!(mean.acc, Some(93.5));
        assert_eq!(sd.acc, Some(0.0));
    }

    #[test]
    fn fold_seeds_differ() {
        assert_ne!(fold_seed(7, 0), fold_seed(7, 1));
        assert_eq!(fold_seed(7, 3), fold_seed(7, 3));
    }
}
