use super::{assemble, iqr_fence, split_classes, IqrFence, Provenance, RebuiltTrainingSet, Strategy};
use crate::autoenc::{reconstruction_score, train_autoencoder, AeTrainConfig, AutoencoderModel};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An autoencoder fitted on the normals of one training set, with the
/// reconstruction score of each of those normals. Selecting at several `k`
/// reuses the same model, so retained sets nest as `k` grows.
#[derive(Clone, Debug)]
pub struct AefIqrFilter<T> {
    pub model: AutoencoderModel<T>,
    normals: Vec<usize>,
    agitations: Vec<usize>,
    scores: Vec<T>,
    seed: u64,
}

impl<T: Scalar> AefIqrFilter<T> {
    pub fn fit(train: &LabeledDataset<T>, config: &AeTrainConfig) -> Result<Self> {
        let (normals, agitations) = split_classes(train);
        if normals.is_empty() || agitations.is_empty() {
            return Err(Error::precondition("AEF-IQR needs both classes in the training set"));
        }
        let vectors: Vec<&[T]> = normals.iter().map(|&i| train.instances()[i].features.as_slice()).collect();
        let model = train_autoencoder(&vectors, config)?;
        let scores = vectors
            .iter()
            .map(|v| reconstruction_score(&model, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, normals, agitations, scores, seed: config.seed })
    }

    /// Reconstruction score of each training normal, in source order.
    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn fence(&self, k: T) -> Result<IqrFence<T>> {
        iqr_fence(&self.scores, k)
    }

    /// Keeps the normals whose score lies strictly inside the `k` fence.
    pub fn select(&self, train: &LabeledDataset<T>, k: T) -> Result<RebuiltTrainingSet<T>> {
        let fence = self.fence(k)?;
        let kept: Vec<usize> = self
            .normals
            .iter()
            .zip(&self.scores)
            .filter(|(_, &s)| fence.contains(s))
            .map(|(&i, _)| i)
            .collect();
        let provenance = Provenance {
            strategy: Strategy::AefIqr,
            proportion: kept.len() as f64 / self.normals.len() as f64,
            seed: self.seed,
            k: Some(k.as_f64()),
            lambda1: None,
            lambda2: None,
            pivot_minutes: None,
            source_normal_count: self.normals.len(),
            retained_normal_count: kept.len(),
            agitation_count: self.agitations.len(),
        };
        Ok(assemble(train, &self.agitations, kept, provenance))
    }
}

/// Autoencoder filtering with an interquartile fence on reconstruction
/// scores. The reported proportion is the realized retained share.
pub fn aef_iqr<T: Scalar>(
    train: &LabeledDataset<T>,
    k: T,
    ae_config: &AeTrainConfig,
    seed: u64,
) -> Result<RebuiltTrainingSet<T>> {
    let config = AeTrainConfig { seed, ..ae_config.clone() };
    AefIqrFilter::fit(train, &config)?.select(train, k)
}
