use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imageio::{DatasetItem, Label, LabeledDataset};
use crate::seed;

/// Assignment of source images to cross-validation folds.
///
/// Augmented items inherit the fold of their source, so no variant of a
/// training image can reach a validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

/// Stratified fold assignment by source.
///
/// Within each class the sources are sorted by id, shuffled with a seeded
/// generator and dealt round-robin; the second class continues the deal
/// where the first stopped so total fold sizes also stay within one.
pub fn make_folds(sources: &[(String, Label)], k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be >= 2, got {k}")));
    }
    let mut assignments = BTreeMap::new();
    let mut next = 0;
    let fold_seed = seed::stage_seed(seed, "folds");
    for label in Label::ALL {
        let mut ids: Vec<&str> = sources
            .iter()
            .filter(|(_, l)| *l == label)
            .map(|(id, _)| id.as_str())
            .collect();
        if ids.len() < k {
            return Err(Error::invalid(format!(
                "{} {label} sources cannot fill {k} folds",
                ids.len()
            )));
        }
        ids.sort_unstable();
        ids.shuffle(&mut seed::item_rng(fold_seed, label.index() as u64));
        for id in ids {
            if assignments.insert(id.to_string(), next % k).is_some() {
                return Err(Error::invalid(format!("source {id:?} listed twice")));
            }
            next += 1;
        }
    }
    Ok(FoldPlan { k, seed, assignments })
}

impl FoldPlan {
    pub fn fold_of(&self, source_id: &str) -> Option<usize> {
        self.assignments.get(source_id).copied()
    }

    /// Every item's source must be assigned.
    pub fn check(&self, dataset: &LabeledDataset) -> Result<()> {
        if let Some(item) = dataset.items.iter().find(|i| self.fold_of(&i.source_id).is_none()) {
            return Err(Error::invalid(format!(
                "source {:?} has no fold assignment",
                item.source_id
            )));
        }
        Ok(())
    }

    /// `(training, validation)` sets for held-out fold `fold`.
    ///
    /// Training takes every item, original or augmented, whose source lies
    /// in another fold. Validation takes the held-out originals, plus their
    /// augmented variants when `include_augmented` is set.
    pub fn split(
        &self,
        dataset: &LabeledDataset,
        fold: usize,
        include_augmented: bool,
    ) -> Result<(LabeledDataset, LabeledDataset)> {
        if fold >= self.k {
            return Err(Error::invalid(format!("fold {fold} outside 0..{}", self.k)));
        }
        self.check(dataset)?;
        let (held, rest): (Vec<&DatasetItem>, Vec<&DatasetItem>) = dataset
            .items
            .iter()
            .partition(|i| self.fold_of(&i.source_id) == Some(fold));
        let val = held
            .into_iter()
            .filter(|i| include_augmented || i.original)
            .cloned()
            .collect();
        Ok((
            LabeledDataset::new(rest.into_iter().cloned().collect()),
            LabeledDataset::new(val),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sources(per_class: usize) -> Vec<(String, Label)> {
        Label::ALL
            .iter()
            .flat_map(|&l| (0..per_class).map(move |i| (format!("{l}{i}"), l)))
            .collect()
    }

    #[test]
    fn balanced_per_class() {
        let plan = make_folds(&sources(10), 5, 3).unwrap();
        for label in Label::ALL {
            let mut sizes = [0; 5];
            for (id, f) in &plan.assignments {
                if id.starts_with(label.as_str()) {
                    sizes[*f] += 1;
                }
            }
            assert_eq!(sizes, [2; 5]);
        }
    }

    #[test]
    fn uneven_counts_differ_by_at_most_one() {
        let mut src = sources(7);
        src.truncate(13);
        let plan = make_folds(&src, 5, 0).unwrap();
        let mut total = [0; 5];
        for f in plan.assignments.values() {
            total[*f] += 1;
        }
        assert!(total.iter().max().unwrap() - total.iter().min().unwrap() <= 1);
    }

    #[test]
    fn reproducible_and_seed_dependent() {
        let a = make_folds(&sources(10), 5, 1).unwrap();
        assert_eq!(a, make_folds(&sources(10), 5, 1).unwrap());
        let mut rev = sources(10);
        rev.reverse();
        assert_eq!(a, make_folds(&rev, 5, 1).unwrap());
        assert_ne!(a, make_folds(&sources(10), 5, 2).unwrap());
    }

    #[test]
    fn precondition_errors() {
        assert!(make_folds(&sources(4), 5, 0).is_err());
        assert!(make_folds(&sources(4), 1, 0).is_err());
        let mut dup = sources(5);
        dup.push(dup[0].clone());
        assert!(make_folds(&dup, 5, 0).is_err());
    }
}
