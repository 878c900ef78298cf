//! End-to-end stage drivers over a versioned work directory.
//!
//! One global seed fans out to the stages as `seed ^ fnv1a64(tag)` with the
//! tags `augment`, `train` and `folds`; the seed fields inside the nested
//! sections are overwritten by the derived values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chaos::{self, ChaosState, ChaosTrajectory, ChuaParams};
use crate::error::{Error, Result};
use crate::eval::{
    self, cross_validate, enhance_dataset, evaluate_scores, make_folds, roc_auc, run_ablation, CvOptions,
    EnhancementSetup,
};
use crate::imageio::{
    augment, load_manifest, load_pgm, normalize, resize_nearest, save_dataset, AugmentationPlan, DatasetItem,
    GrayImage, Label, LabeledDataset,
};
use crate::matrix::Matrix;
use crate::modulate::{difference_map, ModulationConfig};
use crate::nn::{predict, train, write_curves_csv, Checkpoint, NetworkSpec, TrainConfig};
use crate::seed::stage_seed;
use crate::wavelet::default_cdf97;

/// Version of the work-directory layout; stage outputs live under `v{N}/`.
pub const LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory with PGM files and a labels CSV (`file,label[,source_id]`).
    pub input_dir: Option<PathBuf>,
    pub labels_file: String,
    pub work_dir: PathBuf,
    pub seed: u64,
    /// Side length images are resized to.
    pub image_size: usize,
    pub levels: usize,
    pub modulation: ModulationConfig,
    pub chua: ChuaParams,
    pub augmentation: AugmentationPlan,
    pub train: TrainConfig,
    /// Output channels of the convolution blocks.
    pub network_channels: Vec<usize>,
    pub folds: usize,
    pub cv: CvOptions,
    pub difference_maps: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input_dir: None,
            labels_file: "labels.csv".into(),
            work_dir: PathBuf::from("work"),
            seed: 0,
            image_size: 512,
            levels: 6,
            modulation: ModulationConfig::default(),
            chua: ChuaParams::default(),
            augmentation: AugmentationPlan::default(),
            train: TrainConfig::default(),
            network_channels: vec![8, 16, 32],
            folds: 5,
            cv: CvOptions::default(),
            difference_maps: false,
        }
    }
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        Self::from_json(&text).map_err(|e| e.at_path(path))
    }

    /// Applies `key=value` overrides. Keys are dotted paths into the JSON
    /// form (`train.learning_rate`, `modulation.scale`); values are parsed
    /// as JSON, falling back to a plain string.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        let mut root = serde_json::to_value(&*self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override {item:?} is not key=value")))?;
            let mut slot = &mut root;
            for part in key.trim().split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::invalid(format!("unknown config key {key:?}")))?;
            }
            *slot = parse_value(raw.trim());
        }
        *self = serde_json::from_value(root)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 {
            return Err(Error::invalid("image_size must be positive"));
        }
        if self.levels == 0 || self.levels >= usize::BITS as usize || self.image_size % (1 << self.levels) != 0 {
            return Err(Error::invalid(format!(
                "image_size {} is not divisible by 2^{}",
                self.image_size, self.levels
            )));
        }
        if self.network_channels.is_empty() || self.network_channels.contains(&0) {
            return Err(Error::invalid("network_channels needs positive entries"));
        }
        if self.image_size % (1 << self.network_channels.len().min(63)) != 0 {
            return Err(Error::invalid(format!(
                "image_size {} does not survive {} pooling layers",
                self.image_size,
                self.network_channels.len()
            )));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be >= 2"));
        }
        self.modulation.validate(self.levels)?;
        self.chua.validate()?;
        self.augmentation.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn augmentation_plan(&self) -> AugmentationPlan {
        AugmentationPlan { seed: stage_seed(self.seed, "augment"), ..self.augmentation.clone() }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: stage_seed(self.seed, "train"), ..self.train.clone() }
    }

    pub fn fold_seed(&self) -> u64 {
        stage_seed(self.seed, "folds")
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec::conv_blocks((self.image_size, self.image_size), &self.network_channels, 2)
    }

    pub fn enhancement(&self) -> EnhancementSetup {
        EnhancementSetup {
            bank: default_cdf97(),
            levels: self.levels,
            modulation: self.modulation.clone(),
            chua: self.chua,
        }
    }

    pub fn layout(&self) -> WorkLayout {
        WorkLayout::new(&self.work_dir)
    }
}

/// Paths of the stage outputs inside a work directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkLayout {
    pub root: PathBuf,
}

impl WorkLayout {
    pub fn new(work_dir: &Path) -> Self {
        Self { root: work_dir.join(format!("v{LAYOUT_VERSION}")) }
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn dataset_manifest(&self) -> PathBuf {
        self.dataset_dir().join("manifest.csv")
    }

    pub fn enhanced_dir(&self) -> PathBuf {
        self.root.join("enhanced")
    }

    pub fn enhanced_manifest(&self) -> PathBuf {
        self.enhanced_dir().join("manifest.csv")
    }

    pub fn chaos_dir(&self) -> PathBuf {
        self.root.join("chaos")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.models_dir().join("model.ckpt")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    file: String,
    label: Label,
    #[serde(default)]
    source_id: Option<String>,
}

/// Reads the labelled source images, resized to `size x size` and normalized.
/// Every failing file is reported, not just the first.
pub fn load_sources(input_dir: &Path, labels_file: &str, size: usize) -> Result<LabeledDataset> {
    let labels = input_dir.join(labels_file);
    let mut reader = csv::Reader::from_path(&labels).map_err(|e| Error::from(e).at_path(&labels))?;
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for row in reader.deserialize::<LabelRow>() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(Error::from(e).at_path(&labels));
                continue;
            }
        };
        let path = input_dir.join(&row.file);
        let loaded = load_pgm(&path)
            .and_then(|img| resize_nearest(&img, size, size))
            .and_then(|img| normalize(&img))
            .map_err(|e| match e {
                e @ Error::File { .. } => e,
                e => e.at_path(&path),
            });
        match loaded {
            Ok(image) => {
                let source_id = row.source_id.unwrap_or_else(|| {
                    Path::new(&row.file)
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| row.file.clone())
                });
                items.push(DatasetItem { image, label: row.label, source_id, original: true });
            }
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(Error::Many(errors));
    }
    if items.is_empty() {
        return Err(Error::invalid(format!("{} lists no images", labels.display())));
    }
    Ok(LabeledDataset::new(items))
}

/// Resize, normalize, augment and write the dataset with its manifest.
pub fn preprocess(config: &PipelineConfig) -> Result<PathBuf> {
    config.validate()?;
    let input = config
        .input_dir
        .as_deref()
        .ok_or_else(|| Error::invalid("input_dir is not set"))?;
    let sources = load_sources(input, &config.labels_file, config.image_size)?;
    preprocess_dataset(config, &sources)
}

/// Augments already-loaded sources and writes them to the dataset directory.
pub fn preprocess_dataset(config: &PipelineConfig, sources: &LabeledDataset) -> Result<PathBuf> {
    config.validate()?;
    let augmented = augment(sources, &config.augmentation_plan())?;
    save_dataset(&augmented, &config.layout().dataset_dir())
}

/// Integrates the chaotic system for `duration` time units after the
/// configured burn-in.
pub fn simulate_chaos(
    params: &ChuaParams,
    initial: ChaosState,
    step: f64,
    burn_in: usize,
    duration: f64,
) -> Result<ChaosTrajectory> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::invalid("duration must be positive"));
    }
    let samples = (duration / step).round() as usize;
    chaos::integrate(initial, params, step, burn_in, samples.max(1))
}

fn stretch(diff: &Matrix) -> GrayImage {
    let max = diff.as_slice().iter().cloned().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    GrayImage::from_matrix(&diff.map(|v| v * scale))
}

/// Enhances every image of `manifest` and writes them, under the same
/// file names, to the enhanced directory. Difference maps (stretched to the
/// full 8-bit range) go to `enhanced/diff/` when enabled.
pub fn enhance(config: &PipelineConfig, manifest: &Path) -> Result<PathBuf> {
    config.validate()?;
    let (rows, dataset) = load_manifest(manifest)?;
    let enhanced = enhance_dataset(&dataset, &config.enhancement())?;
    let out_dir = config.layout().enhanced_dir();
    let out = save_dataset(&enhanced, &out_dir)?;
    if config.difference_maps {
        let diff_dir = out_dir.join("diff");
        create_dir(&diff_dir)?;
        for ((row, a), b) in rows.iter().zip(&dataset.items).zip(&enhanced.items) {
            let d = difference_map(&a.image.to_matrix()?, &b.image.to_matrix()?)?;
            let name = Path::new(&row.path).file_name().unwrap_or_default();
            crate::imageio::save_pgm(&diff_dir.join(name), &stretch(&d))?;
        }
    }
    Ok(out)
}

/// Trains on every item of `manifest`; writes the checkpoint, the network
/// spec and the training curves. Returns the checkpoint path.
pub fn train_stage(config: &PipelineConfig, manifest: &Path) -> Result<PathBuf> {
    config.validate()?;
    let (_, dataset) = load_manifest(manifest)?;
    let spec = config.network_spec();
    let outcome = train(&dataset, None, &spec, &config.train_config())?;
    let layout = config.layout();
    create_dir(&layout.models_dir())?;
    let ckpt = layout.checkpoint();
    outcome.checkpoint.save(&ckpt)?;
    eval::report::write_json(&spec, &layout.models_dir().join("spec.json"))?;
    let curves = layout.models_dir().join("curves.csv");
    write_curves_csv(&outcome.curves, fs::File::create(&curves).map_err(|e| Error::from(e).at_path(&curves))?)?;
    Ok(ckpt)
}

/// Summary of a single-checkpoint evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub items: usize,
    pub confusion: eval::ConfusionMatrix,
    pub metrics: eval::MetricReport,
    pub roc: Option<eval::RocCurve>,
}

/// Evaluates a checkpoint on the originals of `manifest` (every item when
/// `cv.include_augmented_validation` is set) and writes `evaluation.json`.
pub fn evaluate_checkpoint(config: &PipelineConfig, manifest: &Path, checkpoint: &Path) -> Result<Evaluation> {
    config.validate()?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let network = ckpt.restore(&config.network_spec()).map_err(|e| e.at_path(checkpoint))?;
    let (_, dataset) = load_manifest(manifest)?;
    let dataset = LabeledDataset::new(
        dataset
            .items
            .into_iter()
            .filter(|i| config.cv.include_augmented_validation || i.original)
            .collect(),
    );
    let scores: Vec<f64> = predict(&network, &dataset)?.iter().map(|p| p[1]).collect();
    let labels: Vec<usize> = dataset.items.iter().map(|i| i.label.index()).collect();
    let (confusion, metrics) = evaluate_scores(&scores, &labels)?;
    let evaluation = Evaluation {
        items: dataset.len(),
        confusion,
        metrics,
        roc: roc_auc(&scores, &labels).ok(),
    };
    let dir = config.layout().reports_dir();
    create_dir(&dir)?;
    eval::report::write_json(&evaluation, &dir.join("evaluation.json"))?;
    Ok(evaluation)
}

fn save_checkpoints(dir: &Path, checkpoints: &[Checkpoint]) -> Result<()> {
    create_dir(dir)?;
    for (i, c) in checkpoints.iter().enumerate() {
        c.save(&dir.join(format!("fold{i}.ckpt")))?;
    }
    Ok(())
}

/// Cross-validates on `manifest`; writes reports to `reports/cv/` and
/// per-fold checkpoints to `models/cv/`.
pub fn cross_validate_stage(config: &PipelineConfig, manifest: &Path) -> Result<eval::CvReport> {
    config.validate()?;
    let (_, dataset) = load_manifest(manifest)?;
    let plan = make_folds(&dataset.sources(), config.folds, config.fold_seed())?;
    let outcome = cross_validate(&dataset, &config.network_spec(), &config.train_config(), &plan, &config.cv)?;
    let layout = config.layout();
    eval::report::write_cv_report(&outcome.report, &layout.reports_dir().join("cv"))?;
    save_checkpoints(&layout.models_dir().join("cv"), &outcome.checkpoints)?;
    Ok(outcome.report)
}

/// Runs the chaos ablation on an un-enhanced dataset held in memory and
/// writes reports to `reports/ablation/` and checkpoints to
/// `models/ablation/{without,with}_chaos/`.
pub fn ablate_dataset(config: &PipelineConfig, dataset: &LabeledDataset) -> Result<eval::AblationReport> {
    config.validate()?;
    let plan = make_folds(&dataset.sources(), config.folds, config.fold_seed())?;
    let outcome = run_ablation(
        dataset,
        &config.network_spec(),
        &config.train_config(),
        &plan,
        &config.cv,
        &config.enhancement(),
    )?;
    let layout = config.layout();
    eval::report::write_ablation_report(&outcome.report, &layout.reports_dir().join("ablation"))?;
    let models = layout.models_dir().join("ablation");
    save_checkpoints(&models.join("without_chaos"), &outcome.without_chaos_checkpoints)?;
    save_checkpoints(&models.join("with_chaos"), &outcome.with_chaos_checkpoints)?;
    Ok(outcome.report)
}

/// [`ablate_dataset`] on the images of `manifest`.
pub fn ablate(config: &PipelineConfig, manifest: &Path) -> Result<eval::AblationReport> {
    config.validate()?;
    let (_, dataset) = load_manifest(manifest)?;
    ablate_dataset(config, &dataset)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let mut c = PipelineConfig::default();
        c.apply_overrides(&["train.learning_rate=0.05", "modulation.scale=0", "seed=7", "work_dir=/tmp/x"])
            .unwrap();
        assert_eq!(c.train.learning_rate, 0.05);
        assert_eq!(c.modulation.scale, 0.0);
        assert_eq!(c.seed, 7);
        assert_eq!(c.work_dir, PathBuf::from("/tmp/x"));
        assert!(c.apply_overrides(&["train.nope=1"]).is_err());
        assert!(c.apply_overrides(&["seed"]).is_err());
        assert!(c.apply_overrides(&["seed=\"abc\""]).is_err());
    }

    #[test]
    fn json_round_trip_and_partial_files() {
        let c = PipelineConfig::default();
        assert_eq!(PipelineConfig::from_json(&c.to_json().unwrap()).unwrap(), c);
        let partial = PipelineConfig::from_json(r#"{"levels": 4, "train": {"batch_size": 8}}"#).unwrap();
        assert_eq!(partial.levels, 4);
        assert_eq!(partial.train.batch_size, 8);
        assert_eq!(partial.train.momentum, 0.9);
        assert!(PipelineConfig::from_json(r#"{"levles": 4}"#).is_err());
    }

    #[test]
    fn validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let c = PipelineConfig { image_size: 100, levels: 3, ..Default::default() };
        assert!(c.validate().is_err());
        let c = PipelineConfig { folds: 1, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn stage_seeds_are_distinct() {
        let c = PipelineConfig { seed: 3, ..Default::default() };
        let seeds = [c.augmentation_plan().seed, c.train_config().seed, c.fold_seed()];
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);
    }

    #[test]
    fn layout_is_versioned() {
        let l = WorkLayout::new(Path::new("w"));
        assert_eq!(l.dataset_manifest(), Path::new("w/v1/dataset/manifest.csv"));
    }
}
