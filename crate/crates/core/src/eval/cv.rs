use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{auroc, confusion, ConfusionMatrix, Prf};
use crate::data::{make_folds, LabeledDataset};
use crate::decide::{
    ccr_labels, default_threshold_grid, effective_threshold_range, interim_label, sweep_thresholds, CcrParams,
    EffectiveRange, SweepResult, SweepRow,
};
use crate::error::{Error, Result};
use crate::model::{predict_scores, train_rfc, tune_hyperparams, CostSetting, ForestParams, HyperGrid};
use crate::resample::{rebuild, Provenance, ResampleSpec};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub resample: ResampleSpec,
    pub grid: HyperGrid,
    pub min_leaf: usize,
    pub costs: CostSetting,
    pub n_folds: usize,
    /// Seed of the outer fold assignment, fixed across runs.
    pub seed1: u64,
    /// Sampling and forest seeds; the protocol is repeated once per seed.
    pub seeds2: Vec<u64>,
    pub win: usize,
    pub thresholds: Vec<f64>,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            resample: ResampleSpec::default(),
            grid: HyperGrid::default(),
            min_leaf: 1,
            costs: CostSetting::InverseFrequency,
            n_folds: 5,
            seed1: 1,
            seeds2: vec![1, 2, 3, 4, 5],
            win: 5,
            thresholds: default_threshold_grid(),
        }
    }
}

impl CvSettings {
    pub fn validate(&self) -> Result<()> {
        self.resample.validate()?;
        self.grid.validate()?;
        if self.n_folds < 2 {
            return Err(Error::invalid("n_folds must be at least 2"));
        }
        if self.seeds2.is_empty() {
            return Err(Error::invalid("at least one sampling seed is required"));
        }
        if self.min_leaf == 0 {
            return Err(Error::invalid("min_leaf must be at least 1"));
        }
        if self.thresholds.is_empty() {
            return Err(Error::invalid("threshold grid is empty"));
        }
        for &t in &self.thresholds {
            CcrParams::new(self.win, t)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub seed: u64,
    pub fold: usize,
    pub n_trees: usize,
    pub n_predictors: usize,
    pub auroc: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldTiming {
    pub seed: u64,
    pub fold: usize,
    pub resample_ms: f64,
    pub tune_ms: f64,
    pub train_ms: f64,
}

/// Decisions at one threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub metrics: Prf,
    pub confusion: ConfusionMatrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_auroc: f64,
    /// Out-of-fold AUROC of the pooled test scores.
    pub pooled_auroc: f64,
    pub best_original: OperatingPoint,
    pub best_ccr: OperatingPoint,
    pub effective_range: EffectiveRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub seeds: Vec<SeedSummary>,
    /// Mean of every per-fold AUROC.
    pub mean_auroc: f64,
    /// Precision, recall and F1 averaged over seeds at each threshold.
    pub sweep: SweepResult,
    pub effective_range: EffectiveRange,
    #[serde(skip)]
    pub timings: Vec<FoldTiming>,
    /// Out-of-fold scores per seed, in dataset order.
    #[serde(skip)]
    pub oof_scores: Vec<Vec<f64>>,
}

impl CvReport {
    pub fn mean_train_ms(&self) -> f64 {
        self.timings.iter().map(|t| t.train_ms).sum::<f64>() / self.timings.len().max(1) as f64
    }

    pub fn mean_tune_ms(&self) -> f64 {
        self.timings.iter().map(|t| t.tune_ms).sum::<f64>() / self.timings.len().max(1) as f64
    }
}

fn operating_point<T: Scalar>(
    scores: &[T],
    truth: &[u8],
    days: &[Vec<usize>],
    row: &SweepRow,
    win: usize,
    ccr: bool,
) -> Result<OperatingPoint> {
    let th = row.threshold;
    let pred = if ccr {
        ccr_labels(scores, days, &CcrParams::new(win, th)?)?
    } else {
        scores.iter().map(|s| interim_label(s.as_f64(), th)).collect()
    };
    Ok(OperatingPoint {
        threshold: th,
        metrics: if ccr { row.ccr } else { row.original },
        confusion: confusion(&pred, truth)?,
    })
}

/// Outer cross-validation by participant-day.
///
/// For every sampling seed and outer fold the training part is resampled,
/// hyperparameters are tuned on the rebuilt set by internal two-fold
/// cross-validation, a forest is fit and the untouched test fold is scored.
/// `evaluation_truth` replaces the dataset labels when scoring, e.g. to train
/// on perturbed annotations and evaluate against the originals.
pub fn run_cv_experiment<T: Scalar>(
    dataset: &LabeledDataset<T>,
    settings: &CvSettings,
    evaluation_truth: Option<&[u8]>,
) -> Result<CvReport> {
    settings.validate()?;
    let truth: Vec<u8> = match evaluation_truth {
        Some(t) if t.len() != dataset.len() => {
            return Err(Error::invalid(format!("{} evaluation labels for {} instances", t.len(), dataset.len())))
        }
        Some(t) => t.to_vec(),
        None => dataset.instances().iter().map(|i| i.label.as_u8()).collect(),
    };
    let plan = make_folds(dataset, settings.n_folds, settings.seed1)?;
    let days: Vec<Vec<usize>> = dataset.day_groups().into_iter().map(|(_, p)| p).collect();
    let parts: Vec<(Vec<usize>, Vec<usize>)> =
        (0..settings.n_folds).map(|f| plan.partition(dataset, f)).collect::<Result<_>>()?;

    let mut folds = Vec::new();
    let mut timings = Vec::new();
    let mut oof_scores = Vec::new();
    let mut seeds = Vec::new();
    let mut sweeps = Vec::new();
    for &seed in &settings.seeds2 {
        let mut oof = vec![0.0f64; dataset.len()];
        let mut fold_aurocs = Vec::new();
        for (fold, (train_idx, test_idx)) in parts.iter().enumerate() {
            let train = dataset.subset(train_idx);
            let t0 = Instant::now();
            let rebuilt = rebuild(&train, &settings.resample, seed)?;
            drop(train);
            let resample_ms = t0.elapsed().as_secs_f64() * 1e3;
            let t1 = Instant::now();
            let tuned = tune_hyperparams(&rebuilt.instances, &settings.grid, settings.min_leaf, settings.costs, seed)?;
            let tune_ms = t1.elapsed().as_secs_f64() * 1e3;
            let labels: Vec<u8> = rebuilt.instances.iter().map(|i| i.label.as_u8()).collect();
            let costs = settings.costs.resolve(&labels)?;
            let params = ForestParams {
                n_trees: tuned.n_trees,
                n_predictors: tuned.n_predictors,
                min_leaf: settings.min_leaf,
            };
            let fitted = train_rfc(&rebuilt, &params, costs, seed)?;
            let rows: Vec<&[T]> = test_idx.iter().map(|&i| dataset.instances()[i].features.as_slice()).collect();
            let scores = predict_scores(&fitted.model, &rows)?;
            let test_truth: Vec<u8> = test_idx.iter().map(|&i| truth[i]).collect();
            let fold_auroc = auroc(&scores, &test_truth)?;
            for (&i, s) in test_idx.iter().zip(&scores) {
                oof[i] = s.as_f64();
            }
            fold_aurocs.push(fold_auroc);
            folds.push(FoldResult {
                seed,
                fold,
                n_trees: tuned.n_trees,
                n_predictors: tuned.n_predictors,
                auroc: fold_auroc,
                train_count: rebuilt.len(),
                test_count: test_idx.len(),
                provenance: rebuilt.provenance.clone(),
            });
            timings.push(FoldTiming { seed, fold, resample_ms, tune_ms, train_ms: fitted.train_ms });
        }
        let sweep = sweep_thresholds(&oof, &truth, &days, &settings.thresholds, settings.win)?;
        let best_o = sweep.best_original().expect("nonempty grid").clone();
        let best_c = sweep.best_ccr().expect("nonempty grid").clone();
        seeds.push(SeedSummary {
            seed,
            mean_auroc: fold_aurocs.iter().sum::<f64>() / fold_aurocs.len() as f64,
            pooled_auroc: auroc(&oof, &truth)?,
            best_original: operating_point(&oof, &truth, &days, &best_o, settings.win, false)?,
            best_ccr: operating_point(&oof, &truth, &days, &best_c, settings.win, true)?,
            effective_range: effective_threshold_range(&sweep),
        });
        sweeps.push(sweep);
        oof_scores.push(oof);
    }

    let sweep = mean_sweep(&sweeps);
    let effective_range = effective_threshold_range(&sweep);
    let mean_auroc = folds.iter().map(|f| f.auroc).sum::<f64>() / folds.len() as f64;
    Ok(CvReport { folds, seeds, mean_auroc, sweep, effective_range, timings, oof_scores })
}

/// Threshold-wise mean of precision, recall and F1 over several sweeps of
/// the same grid.
pub fn mean_sweep(sweeps: &[SweepResult]) -> SweepResult {
    let Some(first) = sweeps.first() else {
        return SweepResult::default();
    };
    let n = sweeps.len() as f64;
    let avg = |f: &dyn Fn(&SweepResult) -> Prf| Prf {
        precision: sweeps.iter().map(|s| f(s).precision).sum::<f64>() / n,
        recall: sweeps.iter().map(|s| f(s).recall).sum::<f64>() / n,
        f1: sweeps.iter().map(|s| f(s).f1).sum::<f64>() / n,
    };
    let rows = (0..first.rows.len())
        .map(|i| SweepRow {
            threshold: first.rows[i].threshold,
            original: avg(&|s| s.rows[i].original),
            ccr: avg(&|s| s.rows[i].ccr),
        })
        .collect();
    SweepResult { win: first.win, rows }
}
