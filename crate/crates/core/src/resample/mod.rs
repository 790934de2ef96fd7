//! Undersampling of the majority (normal) class. Every strategy keeps all
//! agitation instances of the source training set.

mod aef;
mod iqr;
mod rus;
mod weighted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autoenc::AeTrainConfig;
use crate::data::{Label, LabeledDataset, WindowInstance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use aef::{aef_iqr, AefIqrFilter};
pub use iqr::{iqr_fence, quantile, IqrFence};
pub use rus::rus;
pub use weighted::{weighted_sample_without_replacement, wrus, wrus_weight, wrus_weights, WrusParams, MIN_WEIGHT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Rus,
    Wrus,
    AefIqr,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Rus => "rus",
            Strategy::Wrus => "wrus",
            Strategy::AefIqr => "aef_iqr",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Strategy::None),
            "rus" => Ok(Strategy::Rus),
            "wrus" => Ok(Strategy::Wrus),
            "aef_iqr" | "aef-iqr" => Ok(Strategy::AefIqr),
            other => Err(Error::invalid(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Provenance of a rebuilt training set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub strategy: Strategy,
    /// Retained share of source normals (realized for AEF-IQR).
    pub proportion: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pivot_minutes: Option<f64>,
    pub source_normal_count: usize,
    pub retained_normal_count: usize,
    pub agitation_count: usize,
}

/// Output of an undersampler: retained instances in source order.
#[derive(Clone, Debug, PartialEq)]
pub struct RebuiltTrainingSet<T> {
    pub instances: Vec<WindowInstance<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> RebuiltTrainingSet<T> {
    /// The untouched training set.
    pub fn identity(train: &LabeledDataset<T>) -> Self {
        let normals = train.count(Label::Normal);
        Self {
            instances: train.instances().to_vec(),
            provenance: Provenance {
                strategy: Strategy::None,
                proportion: 1.0,
                seed: 0,
                k: None,
                lambda1: None,
                lambda2: None,
                pivot_minutes: None,
                source_normal_count: normals,
                retained_normal_count: normals,
                agitation_count: train.len() - normals,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn retained_normal_count(&self) -> usize {
        self.provenance.retained_normal_count
    }

    pub fn agitation_count(&self) -> usize {
        self.provenance.agitation_count
    }

    /// As a dataset carrying the source annotations, e.g. for saving.
    pub fn to_dataset(&self, source: &LabeledDataset<T>) -> Result<LabeledDataset<T>> {
        LabeledDataset::new(self.instances.clone(), source.annotations().to_vec())
    }
}

pub(crate) fn check_proportion(proportion: f64) -> Result<()> {
    if proportion > 0.0 && proportion <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("proportion {proportion} is not in (0, 1]")))
    }
}

/// Source positions of normals and agitations.
pub(crate) fn split_classes<T: Scalar>(train: &LabeledDataset<T>) -> (Vec<usize>, Vec<usize>) {
    let mut normals = Vec::new();
    let mut agitations = Vec::new();
    for (i, inst) in train.instances().iter().enumerate() {
        match inst.label {
            Label::Normal => normals.push(i),
            Label::Agitation => agitations.push(i),
        }
    }
    (normals, agitations)
}

/// Keeps every agitation plus the selected normals, in source order.
pub(crate) fn assemble<T: Scalar>(
    train: &LabeledDataset<T>,
    agitations: &[usize],
    mut selected_normals: Vec<usize>,
    provenance: Provenance,
) -> RebuiltTrainingSet<T> {
    selected_normals.extend_from_slice(agitations);
    selected_normals.sort_unstable();
    RebuiltTrainingSet {
        instances: selected_normals.iter().map(|&i| train.instances()[i].clone()).collect(),
        provenance,
    }
}

/// `round(proportion * normals)`, the RUS/WRUS retained count.
pub fn retained_count(proportion: f64, normals: usize) -> usize {
    (proportion * normals as f64).round() as usize
}

/// A strategy with all of its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSpec {
    pub strategy: Strategy,
    /// Retained share of normals for RUS and WRUS.
    pub proportion: f64,
    /// Fence scale for AEF-IQR.
    pub k: f64,
    pub wrus: WrusParams,
    pub autoencoder: AeTrainConfig,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            strategy: Strategy::None,
            proportion: 1.0,
            k: 1.5,
            wrus: WrusParams::default(),
            autoencoder: AeTrainConfig::default(),
        }
    }
}

impl ResampleSpec {
    pub fn validate(&self) -> Result<()> {
        match self.strategy {
            Strategy::None => Ok(()),
            Strategy::Rus => check_proportion(self.proportion),
            Strategy::Wrus => {
                check_proportion(self.proportion)?;
                self.wrus.validate()
            }
            Strategy::AefIqr => {
                if !(self.k >= 0.0) {
                    return Err(Error::invalid(format!("k must be nonnegative, got {}", self.k)));
                }
                self.autoencoder.validate()
            }
        }
    }
}

/// Rebuilds a training set. WRUS measures time gaps against the
/// annotations carried by `train`.
pub fn rebuild<T: Scalar>(train: &LabeledDataset<T>, spec: &ResampleSpec, seed: u64) -> Result<RebuiltTrainingSet<T>> {
    spec.validate()?;
    match spec.strategy {
        Strategy::None => Ok(RebuiltTrainingSet::identity(train)),
        Strategy::Rus => rus(train, spec.proportion, seed),
        Strategy::Wrus => wrus(train, train.annotations(), spec.proportion, &spec.wrus, seed),
        Strategy::AefIqr => aef_iqr(train, T::lit(spec.k), &spec.autoencoder, seed),
    }
}
