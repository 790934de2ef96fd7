use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

pub const MAX_BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node<T> {
    /// Rows with `x[feature] <= threshold` go left.
    Split { feature: u16, threshold: T, left: u32, right: u32 },
    /// Cost-weighted class tallies of the training rows reaching the leaf.
    Leaf { normal: T, agitation: T },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    pub nodes: Vec<Node<T>>,
}

impl<T: Scalar> Tree<T> {
    pub fn leaf_for(&self, x: &[T]) -> (T, T) {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature as usize] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { normal, agitation } => return (*normal, *agitation),
            }
        }
    }

    /// Class-1 share of the leaf weight reached by `x`.
    pub fn score(&self, x: &[T]) -> T {
        let (n, a) = self.leaf_for(x);
        a / (n + a)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Training rows quantized per feature. Edges are actual feature values;
/// the bin of `x` is the number of edges strictly below `x`, so bin `<= b`
/// holds exactly when `x <= edges[b]`. Features with at most [`MAX_BINS`]
/// distinct values are represented exactly.
pub struct BinnedRows<T> {
    pub n_rows: usize,
    pub n_features: usize,
    pub edges: Vec<Vec<T>>,
    /// Column-major bin codes.
    pub codes: Vec<u8>,
}

impl<T: Scalar> BinnedRows<T> {
    pub fn new(rows: &[&[T]], n_features: usize) -> Self {
        let n = rows.len();
        let mut edges = Vec::with_capacity(n_features);
        let mut codes = vec![0u8; n * n_features];
        let mut column: Vec<T> = Vec::with_capacity(n);
        for f in 0..n_features {
            column.clear();
            column.extend(rows.iter().map(|r| r[f]));
            column.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
            let mut distinct = column.clone();
            distinct.dedup();
            let mut e: Vec<T> = if distinct.len() <= MAX_BINS {
                distinct[..distinct.len().saturating_sub(1)].to_vec()
            } else {
                let mut q: Vec<T> = (1..MAX_BINS).map(|k| column[k * n / MAX_BINS]).collect();
                q.dedup();
                let max = column[n - 1];
                q.retain(|&v| v < max);
                q
            };
            e.shrink_to_fit();
            let out = &mut codes[f * n..(f + 1) * n];
            for (c, r) in out.iter_mut().zip(rows) {
                *c = e.partition_point(|&edge| edge < r[f]) as u8;
            }
            edges.push(e);
        }
        Self { n_rows: n, n_features, edges, codes }
    }

    fn code(&self, feature: usize, row: u32) -> usize {
        self.codes[feature * self.n_rows + row as usize] as usize
    }
}

struct Best {
    feature: usize,
    bin: usize,
    score: f64,
}

/// Grows one tree to purity on a bootstrap sample of the binned rows.
///
/// `labels` are 0/1; class 1 rows weigh `cost_fn` per bootstrap copy.
/// At each node `n_predictors` features are tried in random order; if none
/// of them separates the node, the remaining features are tried as well.
/// Each child must hold at least `min_leaf` bootstrap draws.
pub fn grow_tree<T: Scalar>(
    data: &BinnedRows<T>,
    labels: &[u8],
    n_predictors: usize,
    min_leaf: usize,
    cost_fn: f64,
    rng: &mut ChaCha8Rng,
) -> Tree<T> {
    let n = data.n_rows;
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    let mut rows: Vec<u32> = (0..n as u32).filter(|&i| counts[i as usize] > 0).collect();
    let weight: Vec<f64> = (0..n)
        .map(|i| counts[i] as f64 * if labels[i] != 0 { cost_fn } else { 1.0 })
        .collect();

    let mut features: Vec<usize> = (0..data.n_features).collect();
    let mut nodes: Vec<Node<T>> = vec![Node::Leaf { normal: T::zero(), agitation: T::zero() }];
    let mut stack = vec![(0usize, 0usize, rows.len())];
    let mut h0 = [0.0f64; MAX_BINS];
    let mut h1 = [0.0f64; MAX_BINS];
    let mut hc = [0u32; MAX_BINS];
    let min_leaf = min_leaf.max(1) as u32;

    while let Some((node, start, end)) = stack.pop() {
        let range = &mut rows[start..end];
        let (mut w0, mut w1) = (0.0, 0.0);
        let mut draws = 0u32;
        for &r in range.iter() {
            draws += counts[r as usize];
            if labels[r as usize] != 0 {
                w1 += weight[r as usize];
            } else {
                w0 += weight[r as usize];
            }
        }
        let leaf = Node::Leaf { normal: T::lit(w0), agitation: T::lit(w1) };
        if w0 == 0.0 || w1 == 0.0 || draws < 2 * min_leaf {
            nodes[node] = leaf;
            continue;
        }

        let mut best: Option<Best> = None;
        features.shuffle(rng);
        for (tried, &f) in features.iter().enumerate() {
            if tried >= n_predictors && best.is_some() {
                break;
            }
            let (mut lo, mut hi) = (usize::MAX, 0usize);
            for &r in range.iter() {
                let b = data.code(f, r);
                let w = weight[r as usize];
                hc[b] += counts[r as usize];
                if labels[r as usize] != 0 {
                    h1[b] += w;
                } else {
                    h0[b] += w;
                }
                lo = lo.min(b);
                hi = hi.max(b);
            }
            let (mut l0, mut l1) = (0.0, 0.0);
            let mut lc = 0u32;
            for b in lo..hi {
                if hc[b] == 0 {
                    continue;
                }
                l0 += h0[b];
                l1 += h1[b];
                lc += hc[b];
                if lc < min_leaf || draws - lc < min_leaf {
                    continue;
                }
                let (r0, r1) = (w0 - l0, w1 - l1);
                let score = (l0 * l0 + l1 * l1) / (l0 + l1) + (r0 * r0 + r1 * r1) / (r0 + r1);
                if best.as_ref().is_none_or(|bb| score > bb.score) {
                    best = Some(Best { feature: f, bin: b, score });
                }
            }
            h0[lo..=hi.max(lo)].fill(0.0);
            h1[lo..=hi.max(lo)].fill(0.0);
            hc[lo..=hi.max(lo)].fill(0);
        }

        let Some(best) = best else {
            nodes[node] = leaf;
            continue;
        };
        let mut mid = 0;
        for i in 0..range.len() {
            if data.code(best.feature, range[i]) <= best.bin {
                range.swap(i, mid);
                mid += 1;
            }
        }
        let left = nodes.len();
        nodes.push(Node::Leaf { normal: T::zero(), agitation: T::zero() });
        nodes.push(Node::Leaf { normal: T::zero(), agitation: T::zero() });
        nodes[node] = Node::Split {
            feature: best.feature as u16,
            threshold: data.edges[best.feature][best.bin],
            left: left as u32,
            right: left as u32 + 1,
        };
        stack.push((left + 1, start + mid, end));
        stack.push((left, start, start + mid));
    }
    Tree { nodes }
}

pub(crate) fn tree_rng(seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binning_is_exact_for_few_distinct_values() {
        let raw: Vec<[f64; 1]> = [3.0, 1.0, 2.0, 2.0, 5.0].iter().map(|&v| [v]).collect();
        let rows: Vec<&[f64]> = raw.iter().map(|r| r.as_slice()).collect();
        let b = BinnedRows::new(&rows, 1);
        assert_eq!(b.edges[0], vec![1.0, 2.0, 3.0]);
        assert_eq!(b.codes, vec![2, 0, 1, 1, 3]);
        for (r, &c) in raw.iter().zip(&b.codes) {
            for (bin, &e) in b.edges[0].iter().enumerate() {
                assert_eq!(c as usize <= bin, r[0] <= e);
            }
        }
    }

    #[test]
    fn binning_caps_bin_count() {
        let raw: Vec<[f64; 1]> = (0..5000).map(|i| [((i * 7919) % 5000) as f64]).collect();
        let rows: Vec<&[f64]> = raw.iter().map(|r| r.as_slice()).collect();
        let b = BinnedRows::new(&rows, 1);
        assert!(b.edges[0].len() < MAX_BINS);
        assert!(b.edges[0].windows(2).all(|w| w[0] < w[1]));
        for (r, &c) in raw.iter().zip(&b.codes) {
            assert_eq!(c as usize, b.edges[0].partition_point(|&e| e < r[0]));
        }
    }

    #[test]
    fn tree_fits_training_rows() {
        let raw: Vec<[f64; 2]> = (0..100).map(|i| [(i % 10) as f64, (i / 10) as f64]).collect();
        let labels: Vec<u8> = raw.iter().map(|r| ((r[0] + r[1]) as i32 % 3 == 0) as u8).collect();
        let rows: Vec<&[f64]> = raw.iter().map(|r| r.as_slice()).collect();
        let b = BinnedRows::new(&rows, 2);
        let tree = grow_tree(&b, &labels, 1, 1, 1.0, &mut tree_rng(1, 0));
        for (node_idx, node) in tree.nodes.iter().enumerate() {
            if let Node::Leaf { normal, agitation } = node {
                assert!(normal + agitation > 0.0, "empty leaf {node_idx}");
            }
        }
        // rows in the bootstrap are fit exactly; distinct rows carry distinct features
        let s: Vec<f64> = rows.iter().map(|r| tree.score(r)).collect();
        assert!(s.iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
