//! Metrics and the cross-validation driver.

mod cv;
mod metrics;

pub use cv::{mean_sweep, run_cv_experiment, CvReport, CvSettings, FoldResult, FoldTiming, OperatingPoint, SeedSummary};
pub use metrics::{auroc, confusion, f1_score, precision_recall_f1, ConfusionMatrix, Prf};
