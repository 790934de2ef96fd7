use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{assemble, check_proportion, retained_count, split_classes, Provenance, RebuiltTrainingSet, Strategy};
use crate::data::{AnnotationIndex, EpisodeAnnotation, LabeledDataset};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower clamp on selection weights.
pub const MIN_WEIGHT: f64 = 1e-12;

/// Shape of the deformed sigmoid mapping time gap to selection weight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WrusParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// Gap (minutes) at which the weight is exactly one half.
    pub pivot_minutes: f64,
}

impl Default for WrusParams {
    fn default() -> Self {
        Self { lambda1: 1.5, lambda2: 1.2, pivot_minutes: 10.0 }
    }
}

impl WrusParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 > 0.0) || !self.lambda2.is_finite() || !self.pivot_minutes.is_finite() {
            return Err(Error::invalid(format!("invalid WRUS parameters {self:?}")));
        }
        Ok(())
    }
}

/// `1 / (1 + (e / lambda1)^(lambda2 * (pivot - gap)))`; an unbounded gap
/// (`None`) has weight 1. The result is not clamped.
pub fn wrus_weight<T: Scalar>(gap: Option<T>, params: &WrusParams) -> T {
    let Some(d) = gap else {
        return T::one();
    };
    let base = T::E() / T::lit(params.lambda1);
    let exponent = T::lit(params.lambda2) * (T::lit(params.pivot_minutes) - d);
    T::one() / (T::one() + base.powf(exponent))
}

/// Selection weight of every normal instance of `train`, in source order,
/// from its gap to the nearest episode in `annotations`; clamped below at
/// [`MIN_WEIGHT`].
pub fn wrus_weights<T: Scalar>(
    train: &LabeledDataset<T>,
    annotations: &[EpisodeAnnotation],
    params: &WrusParams,
) -> Result<Vec<T>> {
    params.validate()?;
    let index = AnnotationIndex::new(annotations);
    Ok(train
        .instances()
        .iter()
        .filter(|i| !i.label.is_agitation())
        .map(|i| {
            let gap = index.gap(&i.participant_id, i.day, i.minute_index).map(|g| T::from_u32(g).unwrap());
            wrus_weight(gap, params).max(T::lit(MIN_WEIGHT))
        })
        .collect())
}

/// Draws `m` items without replacement, each draw proportional to the
/// remaining weights. Items with zero weight are never drawn. Selected items
/// are returned in their original order.
pub fn weighted_sample_without_replacement<I: Clone>(
    items: &[I],
    weights: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<I>> {
    Ok(weighted_indices(weights, m, seed)?.into_iter().map(|i| items[i].clone()).collect())
}

fn weighted_indices(weights: &[f64], m: usize, seed: u64) -> Result<Vec<usize>> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid(format!("weights must be finite and nonnegative, found {w}")));
    }
    let positive: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    if m > positive.len() {
        return Err(Error::invalid(format!(
            "cannot draw {m} items from {} with positive weight",
            positive.len()
        )));
    }
    if m == positive.len() {
        return Ok(positive);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Efraimidis-Spirakis keys: the same law as sequential proportional draws.
    let picked = rand::seq::index::sample_weighted(&mut rng, positive.len(), |i| weights[positive[i]], m)
        .map_err(|e| Error::invalid(format!("weighted sampling: {e}")))?;
    let mut out: Vec<usize> = picked.into_iter().map(|i| positive[i]).collect();
    out.sort_unstable();
    Ok(out)
}

/// Weighted random undersampling: like [`super::rus`], but a normal's chance
/// of selection follows its WRUS weight, so normals close to an annotated
/// episode are rarely kept.
pub fn wrus<T: Scalar>(
    train: &LabeledDataset<T>,
    annotations: &[EpisodeAnnotation],
    proportion: f64,
    params: &WrusParams,
    seed: u64,
) -> Result<RebuiltTrainingSet<T>> {
    check_proportion(proportion)?;
    let weights: Vec<f64> = wrus_weights(train, annotations, params)?.into_iter().map(Scalar::as_f64).collect();
    let (normals, agitations) = split_classes(train);
    let m = retained_count(proportion, normals.len());
    let selected = weighted_sample_without_replacement(&normals, &weights, m, seed)?;
    let provenance = Provenance {
        strategy: Strategy::Wrus,
        proportion,
        seed,
        k: None,
        lambda1: Some(params.lambda1),
        lambda2: Some(params.lambda2),
        pivot_minutes: Some(params.pivot_minutes),
        source_normal_count: normals.len(),
        retained_normal_count: m,
        agitation_count: agitations.len(),
    };
    Ok(assemble(train, &agitations, selected, provenance))
}
