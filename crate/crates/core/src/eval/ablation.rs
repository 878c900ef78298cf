use serde::{Deserialize, Serialize};

use super::{cross_validate, mcnemar_test, paired_t_test, wilcoxon_signed_rank};
use super::{CvOptions, CvReport, FoldPlan, McNemarResult, PairedTest};
use crate::chaos::ChuaParams;
use crate::error::{Error, Result};
use crate::imageio::{DatasetItem, GrayImage, LabeledDataset};
use crate::modulate::{Enhancer, ModulationConfig};
use crate::nn::{Checkpoint, NetworkSpec, TrainConfig};
use crate::wavelet::FilterBank;

/// Everything the enhancement stage needs.
#[derive(Debug, Clone)]
pub struct EnhancementSetup {
    pub bank: FilterBank,
    pub levels: usize,
    pub modulation: ModulationConfig,
    pub chua: ChuaParams,
}

/// Applies the wavelet/chaos enhancement to every image of `dataset`.
pub fn enhance_dataset(dataset: &LabeledDataset, setup: &EnhancementSetup) -> Result<LabeledDataset> {
    let mut enhancer = Enhancer::new(setup.bank.clone(), setup.levels, setup.modulation.clone(), setup.chua)?;
    let items = dataset
        .items
        .iter()
        .map(|item| {
            let m = item.image.to_matrix()?;
            Ok(DatasetItem {
                image: GrayImage::from_matrix(&enhancer.enhance(&m)?),
                ..item.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(items))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    /// Wavelet round trip only (modulation scale 0).
    pub without_chaos: CvReport,
    /// Full chaotic modulation.
    pub with_chaos: CvReport,
    /// Classifier A is the with-chaos arm: `b` counts items only it gets
    /// right, `c` items only the without-chaos arm gets right.
    pub mcnemar: McNemarResult,
    /// Fold accuracies, with-chaos minus without-chaos.
    pub accuracy_t_test: PairedTest,
    pub accuracy_wilcoxon: PairedTest,
}

#[derive(Debug, Clone)]
pub struct AblationOutcome {
    pub report: AblationReport,
    pub without_chaos_checkpoints: Vec<Checkpoint>,
    pub with_chaos_checkpoints: Vec<Checkpoint>,
}

/// Runs cross-validation twice on `dataset` (un-enhanced images): once
/// after a plain wavelet round trip and once after chaotic modulation. Both
/// arms share the fold plan, training seeds and every other setting.
pub fn run_ablation(
    dataset: &LabeledDataset,
    spec: &NetworkSpec,
    config: &TrainConfig,
    plan: &FoldPlan,
    options: &CvOptions,
    setup: &EnhancementSetup,
) -> Result<AblationOutcome> {
    setup.modulation.validate(setup.levels)?;
    config.validate()?;
    let plain = EnhancementSetup {
        modulation: ModulationConfig { scale: 0.0, ..setup.modulation.clone() },
        ..setup.clone()
    };
    let without = cross_validate(&enhance_dataset(dataset, &plain)?, spec, config, plan, options)?;
    let with = cross_validate(&enhance_dataset(dataset, setup)?, spec, config, plan, options)?;
    let report = compare(without.report, with.report)?;
    Ok(AblationOutcome {
        report,
        without_chaos_checkpoints: without.checkpoints,
        with_chaos_checkpoints: with.checkpoints,
    })
}

/// Pairs two cross-validation reports computed over the same items.
pub fn compare(without_chaos: CvReport, with_chaos: CvReport) -> Result<AblationReport> {
    let a: Vec<_> = with_chaos.predictions().collect();
    let b: Vec<_> = without_chaos.predictions().collect();
    if a.len() != b.len()
        || a.iter().zip(&b).any(|(x, y)| x.source_id != y.source_id || x.label != y.label)
    {
        return Err(Error::invalid("ablation arms validated different items"));
    }
    let labels: Vec<usize> = a.iter().map(|p| p.label).collect();
    let pa: Vec<usize> = a.iter().map(|p| p.predicted).collect();
    let pb: Vec<usize> = b.iter().map(|p| p.predicted).collect();
    let mcnemar = mcnemar_test(&pa, &pb, &labels)?;
    let acc_with = with_chaos.fold_accuracies();
    let acc_without = without_chaos.fold_accuracies();
    Ok(AblationReport {
        accuracy_t_test: paired_t_test(&acc_with, &acc_without),
        accuracy_wilcoxon: wilcoxon_signed_rank(&acc_with, &acc_without),
        mcnemar,
        without_chaos,
        with_chaos,
    })
}
