//! Bagged CART forests with Gini splits and impurity importances.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, LeafDoc, NodeDoc, Tree};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub num_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features tried at each split; `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(num_trees: usize, max_depth: usize, seed: u64) -> Self {
        Self {
            num_trees,
            max_depth,
            min_samples_split: 2,
            features_per_split: None,
            bootstrap: true,
            seed,
        }
    }

    fn validate(&self, d: usize) -> Result<usize> {
        if self.num_trees == 0 || self.max_depth == 0 || self.min_samples_split < 2 {
            return Err(Error::Training(format!(
                "need num_trees >= 1, max_depth >= 1, min_samples_split >= 2 (got {}, {}, {})",
                self.num_trees, self.max_depth, self.min_samples_split
            )));
        }
        let k = self
            .features_per_split
            .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize);
        if k == 0 || k > d {
            return Err(Error::Training(format!(
                "features_per_split {k} outside 1..={d}"
            )));
        }
        Ok(k)
    }
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

fn majority(pos: usize, n: usize) -> u8 {
    u8::from(2 * pos > n)
}

struct Grower<'a> {
    data: &'a Dataset,
    config: &'a TrainConfig,
    k: usize,
    rng: ChaCha8Rng,
    nodes: Vec<NodeDoc>,
    leaves: Vec<LeafDoc>,
    next_id: usize,
}

impl Grower<'_> {
    fn positives(&self, idx: &[usize]) -> usize {
        idx.iter().filter(|&&i| self.data.labels[i] == 1).count()
    }

    /// Lowest weighted child impurity over the candidate features, as
    /// `(feature, threshold)`. Ties keep the first feature (ascending) and
    /// the lowest threshold.
    fn best_split(&mut self, idx: &[usize]) -> Option<(usize, f64)> {
        let d = self.data.num_features();
        let mut candidates: Vec<usize> = sample(&mut self.rng, d, self.k).into_vec();
        candidates.sort_unstable();
        let found = self.scan(idx, &candidates);
        if found.is_some() {
            return found;
        }
        // every sampled feature is constant here; fall back to the rest
        let rest: Vec<usize> = (0..d).filter(|j| !candidates.contains(j)).collect();
        self.scan(idx, &rest)
    }

    fn scan(&self, idx: &[usize], features: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total_pos = self.positives(idx);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, u8)> = Vec::with_capacity(n);
        for &j in features {
            pairs.clear();
            pairs.extend(
                idx.iter()
                    .map(|&i| (self.data.rows[i][j], self.data.labels[i])),
            );
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for s in 1..n {
                left_pos += usize::from(pairs[s - 1].1);
                if pairs[s].0 == pairs[s - 1].0 {
                    continue;
                }
                let right_pos = total_pos - left_pos;
                let score = (s as f64 * gini(left_pos, s)
                    + (n - s) as f64 * gini(right_pos, n - s))
                    / n as f64;
                if best.is_none_or(|(b, _, _)| score < b - 1e-15) {
                    best = Some((score, j, 0.5 * (pairs[s - 1].0 + pairs[s].0)));
                }
            }
        }
        best.map(|(_, j, c)| (j, c))
    }

    fn grow(&mut self, idx: &[usize], depth: usize) -> usize {
        let id = self.next_id;
        self.next_id += 1;
        let pos = self.positives(idx);
        let pure = pos == 0 || pos == idx.len();
        let split = if pure
            || depth >= self.config.max_depth
            || idx.len() < self.config.min_samples_split
        {
            None
        } else {
            self.best_split(idx)
        };
        match split {
            None => self.leaves.push(LeafDoc {
                id,
                class: majority(pos, idx.len()),
            }),
            Some((feature, threshold)) => {
                let (right, left): (Vec<usize>, Vec<usize>) = idx
                    .iter()
                    .partition(|&&i| self.data.rows[i][feature] >= threshold);
                let slot = self.nodes.len();
                self.nodes.push(NodeDoc {
                    id,
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let l = self.grow(&left, depth + 1);
                let r = self.grow(&right, depth + 1);
                self.nodes[slot].left = l;
                self.nodes[slot].right = r;
            }
        }
        id
    }
}

fn grow_tree(data: &Dataset, config: &TrainConfig, k: usize, t: usize) -> Result<Tree> {
    let mut rng = rng::stream(&[config.seed, t as u64]);
    let n = data.len();
    let idx: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let mut g = Grower {
        data,
        config,
        k,
        rng,
        nodes: Vec::new(),
        leaves: Vec::new(),
        next_id: 0,
    };
    g.grow(&idx, 0);
    Tree::new(0, g.nodes, g.leaves, 1.0)
}

/// Trains a forest of equally weighted trees. Trees are grown in parallel
/// from per-tree random streams, so the result does not depend on the
/// thread count.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let k = config.validate(data.num_features())?;
    let pos = data.labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == data.len() {
        return Err(Error::Training("dataset contains a single class".into()));
    }
    let trees = (0..config.num_trees)
        .into_par_iter()
        .map(|t| grow_tree(data, config, k, t))
        .collect::<Result<Vec<_>>>()?;
    Forest::new(data.features.clone(), trees)
}

/// Fraction of rows the forest classifies correctly.
pub fn accuracy(forest: &Forest, data: &Dataset) -> Result<f64> {
    let mut hits = 0;
    for (row, &label) in data.rows.iter().zip(&data.labels) {
        if forest.predict(row)?.class == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len().max(1) as f64)
}

/// Mean decrease in Gini impurity per feature, measured on `data`,
/// averaged over trees and normalized to sum to 1. All zeros when no tree
/// splits.
pub fn impurity_importances(forest: &Forest, data: &Dataset) -> Result<Vec<f64>> {
    if data.num_features() != forest.num_features() {
        return Err(Error::Validation(format!(
            "dataset has {} features, forest has {}",
            data.num_features(),
            forest.num_features()
        )));
    }
    let n = data.len().max(1) as f64;
    let mut total = vec![0.0; forest.num_features()];
    for tree in forest.trees() {
        // per node: (samples, positives)
        let mut counts = vec![(0usize, 0usize); tree.nodes().len()];
        let mut leaf_counts = vec![(0usize, 0usize); tree.leaves().len()];
        for (row, &label) in data.rows.iter().zip(&data.labels) {
            let leaf = tree.leaf_of(row);
            let lc = &mut leaf_counts[leaf];
            lc.0 += 1;
            lc.1 += usize::from(label == 1);
            for step in tree.path(leaf) {
                let c = &mut counts[step.node];
                c.0 += 1;
                c.1 += usize::from(label == 1);
            }
        }
        let child = |c: crate::forest::Child| match c {
            crate::forest::Child::Node(i) => counts[i],
            crate::forest::Child::Leaf(i) => leaf_counts[i],
        };
        for (i, node) in tree.nodes().iter().enumerate() {
            let (m, p) = counts[i];
            if m == 0 {
                continue;
            }
            let (ml, pl) = child(node.left);
            let (mr, pr) = child(node.right);
            let decrease =
                m as f64 * gini(p, m) - ml as f64 * gini(pl, ml) - mr as f64 * gini(pr, mr);
            total[node.feature] += decrease.max(0.0) / n;
        }
    }
    let sum: f64 = total.iter().sum();
    if sum > 0.0 {
        total.iter_mut().for_each(|v| *v /= sum);
    }
    Ok(total)
}
