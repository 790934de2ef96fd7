//! Random forest with class costs, hyperparameter tuning and scoring.

mod tree;
mod tune;

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::N_FEATURES;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::resample::{Provenance, RebuiltTrainingSet};
use crate::scalar::Scalar;

pub use tree::{BinnedRows, Node, Tree, MAX_BINS};
pub use tune::{tune_hyperparams, GridCell, TuneResult};

pub const FOREST_FORMAT: &str = "forest/v1";

/// Cost of a missed agitation relative to a false alarm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub cost_fn: f64,
}

impl CostSpec {
    pub fn new(cost_fn: f64) -> Result<Self> {
        if !(cost_fn >= 1.0) || !cost_fn.is_finite() {
            return Err(Error::invalid(format!("cost_fn must be a finite value >= 1, got {cost_fn}")));
        }
        Ok(Self { cost_fn })
    }

    /// Normal-to-agitation ratio of the labels, at least 1.
    pub fn inverse_frequency(labels: &[u8]) -> Result<Self> {
        let pos = labels.iter().filter(|&&l| l != 0).count();
        if pos == 0 {
            return Err(Error::precondition("no agitation instances to weight"));
        }
        Self::new(((labels.len() - pos) as f64 / pos as f64).max(1.0))
    }
}

/// How the cost of a training set is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSetting {
    #[default]
    InverseFrequency,
    Fixed(f64),
}

impl CostSetting {
    pub fn resolve(self, labels: &[u8]) -> Result<CostSpec> {
        match self {
            CostSetting::InverseFrequency => CostSpec::inverse_frequency(labels),
            CostSetting::Fixed(c) => CostSpec::new(c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub n_trees_options: Vec<usize>,
    pub n_predictors_options: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            n_trees_options: vec![30, 50, 70, 90, 110],
            n_predictors_options: (0..12).map(|i| 1 + 3 * i).collect(),
        }
    }
}

impl HyperGrid {
    pub fn single(n_trees: usize, n_predictors: usize) -> Self {
        Self { n_trees_options: vec![n_trees], n_predictors_options: vec![n_predictors] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees_options.is_empty() || self.n_predictors_options.is_empty() {
            return Err(Error::invalid("hyperparameter grid is empty"));
        }
        if self.n_trees_options.contains(&0) {
            return Err(Error::invalid("tree counts must be at least 1"));
        }
        if let Some(p) = self.n_predictors_options.iter().find(|&&p| p == 0 || p > N_FEATURES) {
            return Err(Error::invalid(format!("predictor count {p} is outside 1..={N_FEATURES}")));
        }
        Ok(())
    }
}

/// Size controls of one forest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features drawn at random at each split.
    pub n_predictors: usize,
    /// Minimum bootstrap draws per leaf; 1 grows trees to purity.
    pub min_leaf: usize,
}

impl ForestParams {
    pub fn new(n_trees: usize, n_predictors: usize) -> Self {
        Self { n_trees, n_predictors, min_leaf: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.n_predictors == 0 || self.n_predictors > N_FEATURES || self.min_leaf == 0 {
            return Err(Error::invalid(format!(
                "need n_trees >= 1, 1 <= n_predictors <= {N_FEATURES} and min_leaf >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel<T> {
    pub format: String,
    pub n_features: usize,
    pub n_predictors: usize,
    pub min_leaf: usize,
    pub costs: CostSpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub trees: Vec<Tree<T>>,
}

/// A trained forest and its wall-clock fitting time.
#[derive(Clone, Debug)]
pub struct FittedForest<T> {
    pub model: ForestModel<T>,
    pub train_ms: f64,
}

fn check_inputs<T: Scalar>(rows: &[&[T]], labels: &[u8], params: &ForestParams) -> Result<()> {
    if rows.len() != labels.len() {
        return Err(Error::invalid(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    params.validate()?;
    if let Some(r) = rows.iter().find(|r| r.len() != N_FEATURES) {
        return Err(Error::invalid(format!("expected {N_FEATURES} features, got {}", r.len())));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::precondition("forest training needs both classes"));
    }
    Ok(())
}

/// Grows `params.n_trees` trees on bootstraps of `rows`. Tree `i` draws from its
/// own random stream of `seed`, so a forest of `m` trees is the prefix of
/// any larger forest trained with the same seed.
pub fn fit_forest<T: Scalar>(
    rows: &[&[T]],
    labels: &[u8],
    params: &ForestParams,
    costs: CostSpec,
    seed: u64,
) -> Result<ForestModel<T>> {
    check_inputs(rows, labels, params)?;
    let binned = BinnedRows::new(rows, N_FEATURES);
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree::tree_rng(seed, i);
            tree::grow_tree(&binned, labels, params.n_predictors, params.min_leaf, costs.cost_fn, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        format: FOREST_FORMAT.to_string(),
        n_features: N_FEATURES,
        n_predictors: params.n_predictors,
        min_leaf: params.min_leaf,
        costs,
        seed,
        provenance: None,
        trees,
    })
}

/// Trains on a rebuilt training set and reports the fitting time.
pub fn train_rfc<T: Scalar>(
    train: &RebuiltTrainingSet<T>,
    params: &ForestParams,
    costs: CostSpec,
    seed: u64,
) -> Result<FittedForest<T>> {
    let rows: Vec<&[T]> = train.instances.iter().map(|i| i.features.as_slice()).collect();
    let labels: Vec<u8> = train.instances.iter().map(|i| i.label.as_u8()).collect();
    let start = Instant::now();
    let mut model = fit_forest(&rows, &labels, params, costs, seed)?;
    let train_ms = start.elapsed().as_secs_f64() * 1e3;
    model.provenance = Some(train.provenance.clone());
    Ok(FittedForest { model, train_ms })
}

impl<T: Scalar> ForestModel<T> {
    fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::invalid(format!("expected {} features, got {}", self.n_features, x.len())));
        }
        Ok(())
    }

    /// Mean class-1 leaf share over the first `n_trees` trees.
    pub fn score_prefix(&self, x: &[T], n_trees: usize) -> Result<T> {
        self.check_dim(x)?;
        if n_trees == 0 || n_trees > self.trees.len() {
            return Err(Error::invalid(format!("forest has {} trees, asked for {n_trees}", self.trees.len())));
        }
        let sum = self.trees[..n_trees].iter().map(|t| t.score(x)).sum::<T>();
        Ok(sum / T::from_usize_lossy(n_trees))
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))?;
        write_atomic(path, |w| std::io::Write::write_all(w, text.as_bytes()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Serialization(e.to_string()))?;
        if model.format != FOREST_FORMAT {
            return Err(Error::Serialization(format!("unsupported forest format {:?}", model.format)));
        }
        Ok(model)
    }
}

/// Score of one instance in `[0, 1]`.
pub fn predict_score<T: Scalar>(model: &ForestModel<T>, x: &[T]) -> Result<T> {
    model.score_prefix(x, model.trees.len())
}

/// Scores of many instances, in input order.
pub fn predict_scores<T: Scalar>(model: &ForestModel<T>, rows: &[&[T]]) -> Result<Vec<T>> {
    rows.par_iter().map(|x| predict_score(model, x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::date;
    use crate::data::{Label, WindowInstance};
    use crate::eval::auroc;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    /// Two informative coordinates (the first features) plus noise features.
    fn toy(n: usize, pos_share: f64, separation: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let y = rng.random_bool(pos_share) as u8;
            let mut x: Vec<f64> = (0..N_FEATURES).map(|_| StandardNormal.sample(&mut rng)).collect();
            x[0] += separation * y as f64;
            x[1] += separation * y as f64;
            rows.push(x);
            labels.push(y);
        }
        (rows, labels)
    }

    fn refs(rows: &[Vec<f64>]) -> Vec<&[f64]> {
        rows.iter().map(Vec::as_slice).collect()
    }

    fn separable() -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..200 {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            if (a + b).abs() < 0.05 {
                continue;
            }
            let mut x = vec![0.0; N_FEATURES];
            x[0] = a;
            x[1] = b;
            rows.push(x);
            labels.push((a + b > 0.0) as u8);
        }
        (rows, labels)
    }

    #[test]
    fn separable_set_is_fit_exactly() {
        let (rows, labels) = separable();
        let r = refs(&rows);
        let m = fit_forest(&r, &labels, &ForestParams::new(30, 2), CostSpec::new(1.0).unwrap(), 1).unwrap();
        let s = predict_scores(&m, &r).unwrap();
        assert_eq!(auroc(&s, &labels).unwrap(), 1.0);
        for (score, &y) in s.iter().zip(&labels) {
            assert!((0.0..=1.0).contains(score));
            if y == 1 {
                assert!(*score > 0.5);
            }
        }
        for tree in &m.trees {
            for node in &tree.nodes {
                match node {
                    Node::Split { feature, .. } => assert!((*feature as usize) < N_FEATURES),
                    Node::Leaf { normal, agitation } => assert!(normal + agitation > 0.0),
                }
            }
        }
    }

    #[test]
    fn same_seed_same_forest() {
        let (rows, labels) = toy(300, 0.2, 1.5, 4);
        let r = refs(&rows);
        let c = CostSpec::inverse_frequency(&labels).unwrap();
        let a = fit_forest(&r, &labels, &ForestParams::new(8, 5), c, 9).unwrap();
        let b = fit_forest(&r, &labels, &ForestParams::new(8, 5), c, 9).unwrap();
        assert_eq!(a, b);
        let prefix = fit_forest(&r, &labels, &ForestParams::new(3, 5), c, 9).unwrap();
        assert_eq!(prefix.trees[..], a.trees[..3]);
        let other = fit_forest(&r, &labels, &ForestParams::new(8, 5), c, 10).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn single_tree_scores_are_leaf_fractions() {
        let (rows, labels) = toy(300, 0.3, 0.5, 5);
        let r = refs(&rows);
        let m = fit_forest(&r, &labels, &ForestParams::new(1, 3), CostSpec::new(2.0).unwrap(), 2).unwrap();
        let fractions: Vec<f64> = m.trees[0]
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { normal, agitation } => Some(agitation / (normal + agitation)),
                _ => None,
            })
            .collect();
        let (test, _) = toy(100, 0.3, 0.5, 6);
        for x in &test {
            let s = predict_score(&m, x).unwrap();
            assert!(fractions.contains(&s));
        }
    }

    #[test]
    fn scoring_is_permutation_equivariant() {
        let (rows, labels) = toy(200, 0.3, 1.0, 7);
        let r = refs(&rows);
        let m = fit_forest(&r, &labels, &ForestParams::new(5, 4), CostSpec::new(1.0).unwrap(), 2).unwrap();
        let s = predict_scores(&m, &r).unwrap();
        let rev: Vec<&[f64]> = r.iter().rev().cloned().collect();
        let mut s_rev = predict_scores(&m, &rev).unwrap();
        s_rev.reverse();
        assert_eq!(s, s_rev);
        assert!(predict_score(&m, &rows[0][..5]).is_err());
    }

    #[test]
    fn higher_cost_flags_more_training_agitations() {
        for seed in 0..10 {
            let (rows, labels) = toy(1000, 0.05, 1.2, 100 + seed);
            let r = refs(&rows);
            let flagged = |cost: f64| {
                let p = ForestParams { n_trees: 20, n_predictors: 8, min_leaf: 5 };
                let m = fit_forest(&r, &labels, &p, CostSpec::new(cost).unwrap(), seed).unwrap();
                let s = predict_scores(&m, &r).unwrap();
                s.iter().zip(&labels).filter(|(&s, &y)| y == 1 && s >= 0.5).count()
            };
            let counts: Vec<usize> = [1.0, 4.0, 19.0].into_iter().map(flagged).collect();
            assert!(counts.windows(2).all(|w| w[0] <= w[1]), "seed {seed}: {counts:?}");
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let (rows, _) = toy(50, 0.5, 1.0, 8);
        let r = refs(&rows);
        let labels = vec![0u8; 50];
        assert!(matches!(fit_forest(&r, &labels, &ForestParams::new(3, 3), CostSpec::new(1.0).unwrap(), 0), Err(Error::Precondition(_))));
        assert!(fit_forest(&r, &[1; 50], &ForestParams::new(3, 68), CostSpec::new(1.0).unwrap(), 0).is_err());
        assert!(CostSpec::new(0.5).is_err());
    }

    #[test]
    fn forest_file_round_trip() {
        let (rows, labels) = toy(100, 0.3, 1.0, 9);
        let m = fit_forest(&refs(&rows), &labels, &ForestParams::new(3, 4), CostSpec::new(3.0).unwrap(), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("forest.json");
        m.save(&p).unwrap();
        assert_eq!(ForestModel::<f64>::load(&p).unwrap(), m);
    }

    fn day_instances(rows: &[Vec<f64>], labels: &[u8], days: u32) -> Vec<WindowInstance<f64>> {
        rows.iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (x, &y))| WindowInstance {
                participant_id: "p".into(),
                day: date(1 + i as u32 % days),
                minute_index: i as u32,
                features: x.clone(),
                label: Label::from_bool(y == 1),
                category: None,
            })
            .collect()
    }

    #[test]
    fn one_cell_grid_is_returned() {
        let (rows, labels) = toy(100, 0.3, 1.0, 10);
        let inst = day_instances(&rows, &labels, 4);
        let r = tune_hyperparams(&inst, &HyperGrid::single(7, 3), 1, CostSetting::InverseFrequency, 1).unwrap();
        assert_eq!((r.n_trees, r.n_predictors), (7, 3));
    }

    #[test]
    fn tuning_returns_the_grid_argmax() {
        let (rows, labels) = separable();
        let inst = day_instances(&rows, &labels, 4);
        let grid = HyperGrid { n_trees_options: vec![1, 3, 5], n_predictors_options: vec![1, 2, 30] };
        let r = tune_hyperparams(&inst, &grid, 1, CostSetting::Fixed(1.0), 2).unwrap();
        assert_eq!(r.cells.len(), 9);
        let best = r.cells.iter().find(|c| c.n_trees == r.n_trees && c.n_predictors == r.n_predictors).unwrap();
        assert!(r.cells.iter().all(|c| c.auroc <= best.auroc));
        // identical forests on identical folds: the tie goes to fewer trees
        let dup = HyperGrid { n_trees_options: vec![3, 3], n_predictors_options: vec![2] };
        assert_eq!(tune_hyperparams(&inst, &dup, 1, CostSetting::Fixed(1.0), 2).unwrap().cells.len(), 0);
        let flat: Vec<Vec<f64>> = rows.iter().map(|_| vec![0.0; N_FEATURES]).collect();
        let flat_inst = day_instances(&flat, &labels, 4);
        let grid = HyperGrid { n_trees_options: vec![5, 2], n_predictors_options: vec![4, 1] };
        let r = tune_hyperparams(&flat_inst, &grid, 1, CostSetting::Fixed(1.0), 2).unwrap();
        assert_eq!((r.n_trees, r.n_predictors), (2, 1));
    }
}
