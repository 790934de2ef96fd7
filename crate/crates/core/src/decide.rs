//! Threshold decisions, cumulative class re-decision (CCR) over a causal
//! window, threshold sweeps and the effective threshold range.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{confusion, precision_recall_f1, Prf};
use crate::fsutil::write_atomic;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CcrParams {
    pub win: usize,
    pub threshold: f64,
}

impl CcrParams {
    pub fn new(win: usize, threshold: f64) -> Result<Self> {
        if win == 0 {
            return Err(Error::invalid("win must be at least 1"));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("threshold {threshold} is not in (0, 1)")));
        }
        Ok(Self { win, threshold })
    }
}

/// Per-minute decisions of one participant-day, in chronological order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub scores: Vec<f64>,
    pub interim: Vec<u8>,
    pub flag: Vec<usize>,
    pub label: Vec<u8>,
}

/// 1 when `score >= threshold`.
pub fn interim_label(score: f64, threshold: f64) -> u8 {
    (score >= threshold) as u8
}

/// Final label from the window vote and the interim label.
pub fn redecide(flag: usize, win: usize, interim: u8) -> u8 {
    if flag == 0 {
        0
    } else if 2 * flag > win {
        1
    } else {
        interim
    }
}

/// CCR over the chronological scores of a single participant-day.
///
/// `flag` counts interim labels over the previous `win` minutes (fewer at
/// the start of the day). The first `win` minutes keep their interim label.
pub fn ccr_relabel<T: Scalar>(scores: &[T], params: &CcrParams) -> DecisionTrace {
    let n = scores.len();
    let mut trace = DecisionTrace {
        scores: scores.iter().map(|s| s.as_f64()).collect(),
        interim: Vec::with_capacity(n),
        flag: Vec::with_capacity(n),
        label: Vec::with_capacity(n),
    };
    let mut flag = 0usize;
    for i in 0..n {
        let l = interim_label(trace.scores[i], params.threshold);
        trace.interim.push(l);
        trace.flag.push(flag);
        trace.label.push(if i < params.win { l } else { redecide(flag, params.win, l) });
        flag += l as usize;
        if i >= params.win {
            flag -= trace.interim[i - params.win] as usize;
        }
    }
    trace
}

/// Final CCR labels for many days at once. `days` lists, for each
/// participant-day, the positions of its minutes in chronological order.
pub fn ccr_labels<T: Scalar>(scores: &[T], days: &[Vec<usize>], params: &CcrParams) -> Result<Vec<u8>> {
    let mut out = vec![0u8; scores.len()];
    let mut seen = 0;
    for day in days {
        let day_scores: Vec<T> = day.iter().map(|&i| scores[i]).collect();
        let trace = ccr_relabel(&day_scores, params);
        for (&pos, &l) in day.iter().zip(&trace.label) {
            out[pos] = l;
        }
        seen += day.len();
    }
    if seen != scores.len() {
        return Err(Error::invalid(format!("day segments cover {seen} of {} scores", scores.len())));
    }
    Ok(out)
}

/// 0.01, 0.02, ..., 0.99.
pub fn default_threshold_grid() -> Vec<f64> {
    (1..100).map(|k| k as f64 / 100.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub original: Prf,
    pub ccr: Prf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub win: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    fn argmax(&self, f: impl Fn(&SweepRow) -> f64) -> Option<&SweepRow> {
        let mut best: Option<&SweepRow> = None;
        for r in &self.rows {
            if best.is_none_or(|b| f(r) > f(b)) {
                best = Some(r);
            }
        }
        best
    }

    /// Row with the highest Original F1 (leftmost on ties).
    pub fn best_original(&self) -> Option<&SweepRow> {
        self.argmax(|r| r.original.f1)
    }

    /// Row with the highest CCR F1 (leftmost on ties).
    pub fn best_ccr(&self) -> Option<&SweepRow> {
        self.argmax(|r| r.ccr.f1)
    }

    /// Delimited table: threshold, then P/R/F1 for Original and CCR.
    pub fn write_csv(&self, path: &Path, header_comment: &str) -> Result<()> {
        write_atomic(path, |w| {
            for line in header_comment.lines() {
                writeln!(w, "# {line}")?;
            }
            writeln!(w, "threshold,p_orig,r_orig,f1_orig,p_ccr,r_ccr,f1_ccr")?;
            for r in &self.rows {
                writeln!(
                    w,
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    r.threshold,
                    r.original.precision,
                    r.original.recall,
                    r.original.f1,
                    r.ccr.precision,
                    r.ccr.recall,
                    r.ccr.f1
                )?;
            }
            Ok(())
        })
    }
}

/// Precision, recall and F1 of thresholded scores with and without CCR at
/// every grid threshold.
pub fn sweep_thresholds<T: Scalar>(
    scores: &[T],
    truth: &[u8],
    days: &[Vec<usize>],
    grid: &[f64],
    win: usize,
) -> Result<SweepResult> {
    if scores.len() != truth.len() {
        return Err(Error::invalid(format!("{} scores but {} labels", scores.len(), truth.len())));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &th in grid {
        let params = CcrParams::new(win, th)?;
        let original: Vec<u8> = scores.iter().map(|s| interim_label(s.as_f64(), th)).collect();
        let ccr = ccr_labels(scores, days, &params)?;
        rows.push(SweepRow {
            threshold: th,
            original: precision_recall_f1(&confusion(&original, truth)?),
            ccr: precision_recall_f1(&confusion(&ccr, truth)?),
        });
    }
    Ok(SweepResult { win, rows })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveRange {
    /// Peak Original F1 over the grid.
    pub original_peak: f64,
    /// Longest run of grid thresholds where CCR F1 exceeds that peak,
    /// leftmost on ties.
    pub range: Option<(f64, f64)>,
    /// Every such run, left to right.
    pub runs: Vec<(f64, f64)>,
}

impl EffectiveRange {
    pub fn contains(&self, threshold: f64) -> bool {
        self.range.is_some_and(|(lo, hi)| lo <= threshold && threshold <= hi)
    }
}

pub fn effective_threshold_range(sweep: &SweepResult) -> EffectiveRange {
    let original_peak = sweep.rows.iter().map(|r| r.original.f1).fold(f64::NEG_INFINITY, f64::max);
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, r) in sweep.rows.iter().enumerate() {
        if r.ccr.f1 > original_peak {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            runs.push((s, i - 1));
        }
    }
    if let Some(s) = start {
        runs.push((s, sweep.rows.len() - 1));
    }
    let mut best: Option<(usize, usize)> = None;
    for &(s, e) in &runs {
        if best.is_none_or(|(bs, be)| e - s > be - bs) {
            best = Some((s, e));
        }
    }
    let at = |(s, e): (usize, usize)| (sweep.rows[s].threshold, sweep.rows[e].threshold);
    EffectiveRange {
        original_peak: if sweep.rows.is_empty() { 0.0 } else { original_peak },
        range: best.map(at),
        runs: runs.into_iter().map(at).collect(),
    }
}
