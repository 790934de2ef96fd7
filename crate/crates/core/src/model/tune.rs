use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_forest, CostSetting, ForestParams, HyperGrid};
use crate::data::{make_folds_for, WindowInstance};
use crate::error::{Error, Result};
use crate::eval::auroc;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_trees: usize,
    pub n_predictors: usize,
    /// Mean AUROC over the two internal folds.
    pub auroc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub n_trees: usize,
    pub n_predictors: usize,
    pub cells: Vec<GridCell>,
}

/// Internal two-fold cross-validation by participant-day over the grid.
///
/// For each predictor count one forest of the largest tree count is grown
/// per fold; smaller tree counts are scored on its prefixes, which equal
/// forests trained with those counts. Ties go to fewer trees, then fewer
/// predictors. A one-cell grid is returned without fitting.
pub fn tune_hyperparams<T: Scalar>(
    train: &[WindowInstance<T>],
    grid: &HyperGrid,
    min_leaf: usize,
    costs: CostSetting,
    seed: u64,
) -> Result<TuneResult> {
    grid.validate()?;
    let mut n_trees_options = grid.n_trees_options.clone();
    n_trees_options.sort_unstable();
    n_trees_options.dedup();
    let mut n_pred_options = grid.n_predictors_options.clone();
    n_pred_options.sort_unstable();
    n_pred_options.dedup();
    if n_trees_options.len() == 1 && n_pred_options.len() == 1 {
        return Ok(TuneResult { n_trees: n_trees_options[0], n_predictors: n_pred_options[0], cells: vec![] });
    }
    let plan = make_folds_for(train, 2, seed)
        .map_err(|e| Error::precondition(format!("internal two-fold split is infeasible: {e}")))?;
    let max_trees = *n_trees_options.last().unwrap();

    let mut sums = vec![vec![0.0f64; n_trees_options.len()]; n_pred_options.len()];
    for fold in 0..2 {
        let (fit_idx, eval_idx) = plan.partition_instances(train, fold)?;
        let rows: Vec<&[T]> = fit_idx.iter().map(|&i| train[i].features.as_slice()).collect();
        let labels: Vec<u8> = fit_idx.iter().map(|&i| train[i].label.as_u8()).collect();
        let eval_rows: Vec<&[T]> = eval_idx.iter().map(|&i| train[i].features.as_slice()).collect();
        let eval_labels: Vec<u8> = eval_idx.iter().map(|&i| train[i].label.as_u8()).collect();
        let cost = costs.resolve(&labels)?;
        for (pi, &np) in n_pred_options.iter().enumerate() {
            let params = ForestParams { n_trees: max_trees, n_predictors: np, min_leaf };
            let forest = fit_forest(&rows, &labels, &params, cost, seed)?;
            // running per-row sums of tree scores, sampled at each tree count
            let per_row: Vec<Vec<f64>> = eval_rows
                .par_iter()
                .map(|x| {
                    let mut acc = 0.0;
                    let mut out = Vec::with_capacity(n_trees_options.len());
                    let mut next = 0;
                    for (t, tree) in forest.trees.iter().enumerate() {
                        acc += tree.score(x).as_f64();
                        if t + 1 == n_trees_options[next] {
                            out.push(acc / (t + 1) as f64);
                            next += 1;
                            if next == n_trees_options.len() {
                                break;
                            }
                        }
                    }
                    out
                })
                .collect();
            for (ti, sum) in sums[pi].iter_mut().enumerate() {
                let scores: Vec<f64> = per_row.iter().map(|r| r[ti]).collect();
                *sum += auroc(&scores, &eval_labels)?;
            }
        }
    }

    let mut cells = Vec::new();
    let mut best: Option<GridCell> = None;
    for &nt in &n_trees_options {
        for (pi, &np) in n_pred_options.iter().enumerate() {
            let ti = n_trees_options.iter().position(|&x| x == nt).unwrap();
            let cell = GridCell { n_trees: nt, n_predictors: np, auroc: sums[pi][ti] / 2.0 };
            if best.as_ref().is_none_or(|b| cell.auroc > b.auroc) {
                best = Some(cell.clone());
            }
            cells.push(cell);
        }
    }
    let best = best.unwrap();
    Ok(TuneResult { n_trees: best.n_trees, n_predictors: best.n_predictors, cells })
}
