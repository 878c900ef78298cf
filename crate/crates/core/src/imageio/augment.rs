use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetItem, GrayImage, Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugOp {
    HorizontalFlip,
    VerticalFlip,
    Rotate90,
    Brightness,
    VerticalScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationPlan {
    pub target_count: usize,
    pub seed: u64,
    pub ops: Vec<AugOp>,
    /// Brightness factors are drawn uniformly from this range.
    pub brightness_range: (f64, f64),
    pub vertical_scale_factor: f64,
}

impl Default for AugmentationPlan {
    fn default() -> Self {
        Self {
            target_count: 2048,
            seed: 0,
            ops: vec![
                AugOp::HorizontalFlip,
                AugOp::VerticalFlip,
                AugOp::Rotate90,
                AugOp::Brightness,
                AugOp::VerticalScale,
            ],
            brightness_range: (0.2, 1.0),
            vertical_scale_factor: 0.5,
        }
    }
}

impl AugmentationPlan {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.brightness_range;
        if !(0.2 <= lo && lo <= hi && hi <= 1.0) {
            return Err(Error::invalid(format!(
                "brightness range ({lo}, {hi}) must lie within [0.2, 1.0]"
            )));
        }
        if !(self.vertical_scale_factor > 0.0 && self.vertical_scale_factor <= 1.0) {
            return Err(Error::invalid("vertical scale factor must lie in (0, 1]"));
        }
        if self.ops.is_empty() {
            return Err(Error::invalid("augmentation plan has no operations"));
        }
        Ok(())
    }

    /// Applies one operation; brightness draws its factor from `rng`.
    pub fn apply(&self, op: AugOp, image: &GrayImage, rng: &mut impl Rng) -> Result<GrayImage> {
        Ok(match op {
            AugOp::HorizontalFlip => image.flip_horizontal(),
            AugOp::VerticalFlip => image.flip_vertical(),
            AugOp::Rotate90 => image.rotate_90(),
            AugOp::Brightness => {
                let (lo, hi) = self.brightness_range;
                image.brightness(rng.random_range(lo..=hi))?
            }
            AugOp::VerticalScale => image.vertical_scale(self.vertical_scale_factor)?,
        })
    }
}

/// Splits `target` across classes in proportion to `counts`, largest
/// remainders first. Each share is at least the class's own count.
fn class_quotas(counts: [usize; 2], target: usize) -> [usize; 2] {
    let total = counts[0] + counts[1];
    let exact = counts.map(|c| c as f64 * target as f64 / total as f64);
    let mut quotas = exact.map(|e| e.floor() as usize);
    let mut order = [0usize, 1];
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let mut left = target - quotas[0] - quotas[1];
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if counts[i] > 0 {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

/// Expands `dataset` to `plan.target_count` items.
///
/// Originals are kept first. Each additional slot picks a source of the
/// required class uniformly and applies a random subset of 1–3 plan
/// operations in random order. Slot `i` draws from its own generator
/// stream, so the output does not depend on evaluation order.
pub fn augment(dataset: &LabeledDataset, plan: &AugmentationPlan) -> Result<LabeledDataset> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot augment an empty dataset"));
    }
    plan.validate()?;
    if plan.target_count < dataset.len() {
        return Err(Error::invalid(format!(
            "target count {} is below the source count {}",
            plan.target_count,
            dataset.len()
        )));
    }
    if plan.ops.contains(&AugOp::Rotate90) {
        if let Some(bad) = dataset.items.iter().find(|i| i.image.height() != i.image.width()) {
            return Err(Error::invalid(format!(
                "rotate_90 needs square images; {} is {}x{}",
                bad.source_id,
                bad.image.height(),
                bad.image.width()
            )));
        }
    }

    let (benign, malignant) = dataset.class_counts();
    let quotas = class_quotas([benign, malignant], plan.target_count);
    let mut items = dataset.items.clone();
    let mut slot = 0u64;
    for label in Label::ALL {
        let pool: Vec<&DatasetItem> = dataset.items.iter().filter(|i| i.label == label).collect();
        let extra = quotas[label.index()] - pool.len();
        for _ in 0..extra {
            let mut rng = seed::item_rng(plan.seed, slot);
            slot += 1;
            let src = pool[rng.random_range(0..pool.len())];
            let n_ops = rng.random_range(1..=plan.ops.len().min(3));
            let mut image = src.image.clone();
            for k in index::sample(&mut rng, plan.ops.len(), n_ops) {
                image = plan.apply(plan.ops[k], &image, &mut rng)?;
            }
            items.push(DatasetItem {
                image,
                label,
                source_id: src.source_id.clone(),
                original: false,
            });
        }
    }
    Ok(LabeledDataset::new(items))
}
