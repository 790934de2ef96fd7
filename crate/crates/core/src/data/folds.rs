use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{group_by_day, DayKey, Label, LabeledDataset, WindowInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Assignment of whole participant-days to cross-validation folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold_of: BTreeMap<DayKey, usize>,
    pub n_folds: usize,
}

impl SplitPlan {
    pub fn fold(&self, key: &DayKey) -> Option<usize> {
        self.fold_of.get(key).copied()
    }

    /// Instance positions of `(train, test)` for the given fold.
    pub fn partition<T: Scalar>(
        &self,
        dataset: &LabeledDataset<T>,
        fold: usize,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        self.partition_instances(dataset.instances(), fold)
    }

    pub fn partition_instances<T>(
        &self,
        instances: &[WindowInstance<T>],
        fold: usize,
    ) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (key, positions) in group_by_day(instances) {
            let f = self
                .fold(&key)
                .ok_or_else(|| Error::precondition(format!("{key} has no fold assignment")))?;
            if f == fold {
                test.extend(positions);
            } else {
                train.extend(positions);
            }
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((train, test))
    }

    /// Largest relative difference of agitation-minute counts between folds,
    /// `(max - min) / max`.
    pub fn agitation_imbalance<T: Scalar>(&self, dataset: &LabeledDataset<T>) -> f64 {
        let mut per_fold = vec![0usize; self.n_folds];
        for inst in dataset.instances() {
            if inst.label.is_agitation() {
                if let Some(f) = self.fold(&inst.key()) {
                    per_fold[f] += 1;
                }
            }
        }
        let max = *per_fold.iter().max().unwrap_or(&0);
        let min = *per_fold.iter().min().unwrap_or(&0);
        if max == 0 {
            0.0
        } else {
            (max - min) as f64 / max as f64
        }
    }
}

/// Day-level stratified fold assignment.
///
/// Agitation days are dealt greedily, largest agitation-minute count first,
/// to the fold with the fewest agitation minutes so far; remaining days are
/// dealt to the fold with the fewest instances. A seeded shuffle before the
/// stable sorts breaks ties.
pub fn make_folds<T: Scalar>(
    dataset: &LabeledDataset<T>,
    n_folds: usize,
    seed: u64,
) -> Result<SplitPlan> {
    make_folds_for(dataset.instances(), n_folds, seed)
}

/// [`make_folds`] over a bare instance list.
pub fn make_folds_for<T>(instances: &[WindowInstance<T>], n_folds: usize, seed: u64) -> Result<SplitPlan> {
    if n_folds < 2 {
        return Err(Error::invalid("n_folds must be at least 2"));
    }
    let mut days: Vec<(DayKey, usize, usize)> = group_by_day(instances)
        .into_iter()
        .map(|(key, positions)| {
            let agit = positions.iter().filter(|&&i| instances[i].label == Label::Agitation).count();
            (key, agit, positions.len() - agit)
        })
        .collect();
    let total_agit: usize = days.iter().map(|d| d.1).sum();
    if total_agit == 0 || total_agit == instances.len() {
        return Err(Error::precondition("both classes must be present to build folds"));
    }
    let agit_days = days.iter().filter(|d| d.1 > 0).count();
    let normal_days = days.iter().filter(|d| d.2 > 0).count();
    if agit_days < n_folds || normal_days < n_folds {
        return Err(Error::precondition(format!(
            "need at least {n_folds} participant-days per class, found {agit_days} with agitation and {normal_days} with normal minutes"
        )));
    }
    days.sort_by(|a, b| a.0.cmp(&b.0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    days.shuffle(&mut rng);
    days.sort_by(|a, b| b.1.cmp(&a.1));

    let mut agit_load = vec![0usize; n_folds];
    let mut size_load = vec![0usize; n_folds];
    let mut fold_of = BTreeMap::new();
    for (key, agit, normal) in days {
        let target = if agit > 0 {
            (0..n_folds).min_by_key(|&f| (agit_load[f], size_load[f], f)).unwrap()
        } else {
            (0..n_folds).min_by_key(|&f| (size_load[f], f)).unwrap()
        };
        agit_load[target] += agit;
        size_load[target] += agit + normal;
        fold_of.insert(key, target);
    }
    Ok(SplitPlan { fold_of, n_folds })
}
