//! Classification metrics, ROC analysis, leakage-safe cross-validation,
//! the with/without-chaos ablation and the paired significance tests used
//! to compare its arms.

mod ablation;
mod cv;
mod folds;
mod metrics;
pub mod report;
mod roc;
mod stats;

pub use ablation::{compare, enhance_dataset, run_ablation, AblationOutcome, AblationReport, EnhancementSetup};
pub use cv::{cross_validate, fold_seed, summarize, CvOptions, CvOutcome, CvReport, FoldResult, Prediction};
pub use folds::{make_folds, FoldPlan};
pub use metrics::{compute_metrics, evaluate_scores, mse_loss, ConfusionMatrix, MetricReport};
pub use roc::{roc_auc, RocCurve, RocPoint};
pub use stats::{
    exact_binomial_two_sided, format_p, mcnemar_from_counts, mcnemar_test, mean_sd, paired_t_test,
    wilcoxon_signed_rank, McNemarMethod, McNemarResult, PairedTest, ALPHA, MCNEMAR_EXACT_BELOW,
    WILCOXON_EXACT_MAX, ZERO_VARIANCE_TOLERANCE,
};
