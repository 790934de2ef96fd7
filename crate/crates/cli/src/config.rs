use std::path::{Path, PathBuf};

use agitation::autoenc::AeTrainConfig;
use agitation::decide::default_threshold_grid;
use agitation::eval::CvSettings;
use agitation::model::{CostSetting, HyperGrid};
use agitation::resample::{ResampleSpec, Strategy, WrusParams};
use agitation::signal::PipelineConfig;
use agitation::synth::CohortConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

/// Where the instances come from: files on disk or a synthetic cohort.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFiles {
    pub instances: PathBuf,
    pub annotations: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: Option<DataFiles>,
    pub synth: CohortConfig,
    pub pipeline: PipelineConfig,
    pub strategy: Strategy,
    /// Selection proportions for RUS and WRUS; one experiment per entry.
    pub proportions: Vec<f64>,
    /// Fence scales for AEF-IQR; one experiment per entry.
    pub k_values: Vec<f64>,
    pub wrus: WrusParams,
    pub autoencoder: AeTrainConfig,
    pub grid: HyperGrid,
    pub min_leaf: usize,
    pub costs: CostSetting,
    pub n_folds: usize,
    pub seed1: u64,
    pub seeds2: Vec<u64>,
    pub win: usize,
    pub thresholds: Vec<f64>,
    /// Inward shift bound of annotation boundaries used for training labels;
    /// evaluation always uses the original labels. 0 disables it.
    pub jitter_max_shift: u32,
    pub jitter_seed: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let cv = CvSettings::default();
        Self {
            data: None,
            synth: CohortConfig::default(),
            pipeline: PipelineConfig::default(),
            strategy: Strategy::None,
            proportions: vec![1.0],
            k_values: vec![1.5],
            wrus: WrusParams::default(),
            autoencoder: AeTrainConfig::default(),
            grid: HyperGrid::default(),
            min_leaf: cv.min_leaf,
            costs: cv.costs,
            n_folds: cv.n_folds,
            seed1: cv.seed1,
            seeds2: cv.seeds2,
            win: cv.win,
            thresholds: default_threshold_grid(),
            jitter_max_shift: 0,
            jitter_seed: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

/// One experiment of a batch: the strategy parameter that varies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub strategy: Strategy,
    pub value: f64,
}

impl Point {
    /// File-name tag such as `rus_p0.2`.
    pub fn tag(&self) -> String {
        match self.strategy {
            Strategy::None => "none".to_string(),
            Strategy::AefIqr => format!("aef_iqr_k{}", self.value),
            s => format!("{s}_p{}", self.value),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: Self =
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.output_dir = base.join(&config.output_dir);
        if let Some(data) = &mut config.data {
            data.instances = base.join(&data.instances);
            data.annotations = base.join(&data.annotations);
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        let usage = |e: agitation::Error| Failure::Usage(e.to_string());
        if self.data.is_none() {
            self.synth.validate().map_err(usage)?;
        }
        match self.strategy {
            Strategy::Rus | Strategy::Wrus if self.proportions.is_empty() => {
                return Err(Failure::Usage("proportions is empty".into()))
            }
            Strategy::AefIqr if self.k_values.is_empty() => return Err(Failure::Usage("k_values is empty".into())),
            _ => {}
        }
        for p in self.points() {
            self.cv_settings(p).validate().map_err(usage)?;
        }
        Ok(())
    }

    /// The experiments of this config, in order.
    pub fn points(&self) -> Vec<Point> {
        let strategy = self.strategy;
        match strategy {
            Strategy::None => vec![Point { strategy, value: 1.0 }],
            Strategy::Rus | Strategy::Wrus => self.proportions.iter().map(|&value| Point { strategy, value }).collect(),
            Strategy::AefIqr => self.k_values.iter().map(|&value| Point { strategy, value }).collect(),
        }
    }

    pub fn cv_settings(&self, point: Point) -> CvSettings {
        let mut resample = ResampleSpec {
            strategy: point.strategy,
            wrus: self.wrus,
            autoencoder: self.autoencoder.clone(),
            ..ResampleSpec::default()
        };
        match point.strategy {
            Strategy::AefIqr => resample.k = point.value,
            _ => resample.proportion = point.value,
        }
        CvSettings {
            resample,
            grid: self.grid.clone(),
            min_leaf: self.min_leaf,
            costs: self.costs,
            n_folds: self.n_folds,
            seed1: self.seed1,
            seeds2: self.seeds2.clone(),
            win: self.win,
            thresholds: self.thresholds.clone(),
        }
    }

    /// SHA-256 of the normalized config, independent of file formatting and
    /// of the output directory.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(&Self { output_dir: PathBuf::new(), ..self.clone() })
            .expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}
