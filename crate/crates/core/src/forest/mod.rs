//! Binary-split tree ensembles with univariate thresholds.
//!
//! Routing follows `x[feature] >= threshold` to the right child and
//! `x[feature] < threshold` to the left child. Forests are immutable once
//! built and every derived quantity (leaf paths, feature occurrence counts)
//! is computed at construction time.

mod fixtures;
mod geometry;
mod json;

pub use fixtures::{firefighter_forest, firefighter_table, FIREFIGHTER_LEAVES};
pub use geometry::{boxes_intersect, FeatureBox, Interval};
pub use json::{FeatureDoc, ForestDoc, LeafDoc, NodeDoc, TreeDoc};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default split slack used to turn `x < c` into the closed `x <= c - eps`.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

/// Direction in which a feature change helps reach the desired class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Increase,
    Decrease,
    ToOne,
    ToZero,
    None,
}

impl Direction {
    /// Sign of a favourable change: `+1`, `-1`, or `0` for [`Direction::None`].
    pub fn sign(self) -> f64 {
        match self {
            Direction::Increase | Direction::ToOne => 1.0,
            Direction::Decrease | Direction::ToZero => -1.0,
            Direction::None => 0.0,
        }
    }

    /// The favourable value of a binary feature, if any.
    pub fn binary_target(self) -> Option<f64> {
        match self {
            Direction::Increase | Direction::ToOne => Some(1.0),
            Direction::Decrease | Direction::ToZero => Some(0.0),
            Direction::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub index: usize,
    pub name: String,
    pub kind: FeatureKind,
    pub mutable: bool,
    pub beneficial: Direction,
    pub lo: f64,
    pub hi: f64,
}

impl FeatureMeta {
    pub fn continuous(index: usize, name: impl Into<String>, beneficial: Direction) -> Self {
        Self {
            index,
            name: name.into(),
            kind: FeatureKind::Continuous,
            mutable: beneficial != Direction::None,
            beneficial,
            lo: 0.0,
            hi: 1.0,
        }
    }

    pub fn binary(index: usize, name: impl Into<String>, beneficial: Direction) -> Self {
        Self {
            kind: FeatureKind::Binary,
            ..Self::continuous(index, name, beneficial)
        }
    }

    pub fn immutable(mut self) -> Self {
        self.mutable = false;
        self
    }

    pub fn domain(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }

    fn validate(&self, position: usize) -> Result<()> {
        let loc = || format!("feature {position} (`{}`)", self.name);
        if self.index != position {
            return Err(Error::forest(
                loc(),
                format!("index {} out of order", self.index),
            ));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::forest(
                loc(),
                format!("bad domain [{}, {}]", self.lo, self.hi),
            ));
        }
        if self.kind == FeatureKind::Binary && (self.lo != 0.0 || self.hi != 1.0) {
            return Err(Error::forest(
                loc(),
                "binary features must have domain [0, 1]",
            ));
        }
        if self.mutable && self.beneficial == Direction::None {
            return Err(Error::forest(
                loc(),
                "mutable feature needs a beneficial direction",
            ));
        }
        Ok(())
    }
}

/// Reference to a child by its position in [`Tree::nodes`] or [`Tree::leaves`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Child {
    Node(usize),
    Leaf(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub feature: usize,
    pub threshold: f64,
    pub left: Child,
    pub right: Child,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Leaf {
    pub id: usize,
    pub class: u8,
}

/// One split on the root-to-leaf path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathStep {
    /// Position of the node in [`Tree::nodes`].
    pub node: usize,
    pub feature: usize,
    pub threshold: f64,
    /// `true` when the path takes the right branch (a right ancestor).
    pub right: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    root: Child,
    nodes: Vec<Node>,
    leaves: Vec<Leaf>,
    weight: f64,
    depth: usize,
    paths: Vec<Vec<PathStep>>,
}

impl Tree {
    /// Builds a tree from id-addressed parts. Node and leaf ids share one
    /// namespace so that `left`/`right` are unambiguous.
    pub fn new(
        root: usize,
        nodes: Vec<NodeDoc>,
        leaves: Vec<LeafDoc>,
        weight: f64,
    ) -> Result<Self> {
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::forest(
                "tree",
                format!("weight {weight} must be finite and >= 0"),
            ));
        }
        let mut index: HashMap<usize, Child> = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, Child::Node(i)).is_some() {
                return Err(Error::forest(format!("node {}", n.id), "duplicate id"));
            }
        }
        for (i, l) in leaves.iter().enumerate() {
            if index.insert(l.id, Child::Leaf(i)).is_some() {
                return Err(Error::forest(format!("leaf {}", l.id), "duplicate id"));
            }
            if l.class > 1 {
                return Err(Error::forest(
                    format!("leaf {}", l.id),
                    format!("class {} outside {{0, 1}}", l.class),
                ));
            }
        }
        let lookup = |owner: usize, id: usize| {
            index.get(&id).copied().ok_or_else(|| {
                Error::forest(format!("node {owner}"), format!("dangling child id {id}"))
            })
        };
        let mut built = Vec::with_capacity(nodes.len());
        for n in &nodes {
            if !n.threshold.is_finite() {
                return Err(Error::forest(
                    format!("node {}", n.id),
                    "non-finite threshold",
                ));
            }
            built.push(Node {
                id: n.id,
                feature: n.feature,
                threshold: n.threshold,
                left: lookup(n.id, n.left)?,
                right: lookup(n.id, n.right)?,
            });
        }
        let root = *index
            .get(&root)
            .ok_or_else(|| Error::forest("root", format!("unknown root id {root}")))?;
        let leaves: Vec<Leaf> = leaves
            .iter()
            .map(|l| Leaf {
                id: l.id,
                class: l.class,
            })
            .collect();

        // Walk from the root; each element must be reached exactly once.
        let mut seen_nodes = vec![false; built.len()];
        let mut paths: Vec<Option<Vec<PathStep>>> = vec![None; leaves.len()];
        let mut stack = vec![(root, Vec::<PathStep>::new())];
        let mut depth = 0;
        while let Some((child, path)) = stack.pop() {
            match child {
                Child::Leaf(l) => {
                    if paths[l].is_some() {
                        return Err(Error::forest(
                            format!("leaf {}", leaves[l].id),
                            "reachable by more than one path",
                        ));
                    }
                    depth = depth.max(path.len());
                    paths[l] = Some(path);
                }
                Child::Node(n) => {
                    if std::mem::replace(&mut seen_nodes[n], true) {
                        return Err(Error::forest(
                            format!("node {}", built[n].id),
                            "reachable by more than one path",
                        ));
                    }
                    let node = &built[n];
                    let step = |right| PathStep {
                        node: n,
                        feature: node.feature,
                        threshold: node.threshold,
                        right,
                    };
                    let mut left_path = path.clone();
                    left_path.push(step(false));
                    let mut right_path = path;
                    right_path.push(step(true));
                    stack.push((node.right, right_path));
                    stack.push((node.left, left_path));
                }
            }
        }
        if let Some(n) = seen_nodes.iter().position(|s| !s) {
            return Err(Error::forest(
                format!("node {}", built[n].id),
                "unreachable from root",
            ));
        }
        let paths = paths
            .into_iter()
            .enumerate()
            .map(|(l, p)| {
                p.ok_or_else(|| {
                    Error::forest(format!("leaf {}", leaves[l].id), "unreachable from root")
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(Self {
            root,
            nodes: built,
            leaves,
            weight,
            depth,
            paths,
        })
    }

    pub fn root(&self) -> Child {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn leaves(&self) -> &[Leaf] {
        &self.leaves
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Longest root-to-leaf path, counted in splits.
    pub fn depth(&self) -> usize {
        self.depth
    }

    /// Ancestors of leaf `leaf` (by position), root first.
    pub fn path(&self, leaf: usize) -> &[PathStep] {
        &self.paths[leaf]
    }

    pub fn node_position(&self, id: usize) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn leaf_position(&self, id: usize) -> Option<usize> {
        self.leaves.iter().position(|l| l.id == id)
    }

    /// Position of the leaf reached by `x`.
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut cur = self.root;
        loop {
            match cur {
                Child::Leaf(l) => return l,
                Child::Node(n) => {
                    let node = &self.nodes[n];
                    cur = if x[node.feature] >= node.threshold {
                        node.right
                    } else {
                        node.left
                    };
                }
            }
        }
    }

    /// Region of the feature space routed to `leaf`, with the strict left
    /// inequalities tightened to `x <= c - epsilon`.
    pub fn leaf_box(&self, leaf: usize, domain: &FeatureBox, epsilon: f64) -> Result<FeatureBox> {
        let mut out = domain.clone();
        for step in self.path(leaf) {
            let iv = &mut out.0[step.feature];
            if step.right {
                iv.lo = iv.lo.max(step.threshold);
            } else {
                iv.hi = iv.hi.min(step.threshold - epsilon);
            }
        }
        if let Some((feature, iv)) = out.0.iter().enumerate().find(|(_, iv)| iv.is_empty()) {
            return Err(Error::DegenerateBox {
                feature,
                lo: iv.lo,
                hi: iv.hi,
            });
        }
        Ok(out)
    }
}

/// Outcome of a weighted majority vote.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: u8,
    /// Total weight voting for class 0 and class 1.
    pub votes: [f64; 2],
    /// Class predicted by each tree, in forest order.
    pub tree_votes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    features: Vec<FeatureMeta>,
    trees: Vec<Tree>,
    occurrences: Vec<usize>,
}

impl Forest {
    pub fn new(features: Vec<FeatureMeta>, trees: Vec<Tree>) -> Result<Self> {
        for (i, f) in features.iter().enumerate() {
            f.validate(i)?;
        }
        if trees.is_empty() {
            return Err(Error::forest("forest", "no trees"));
        }
        let d = features.len();
        let mut occurrences = vec![0; d];
        for (t, tree) in trees.iter().enumerate() {
            for node in &tree.nodes {
                let loc = || format!("tree {t}, node {}", node.id);
                let meta = features.get(node.feature).ok_or_else(|| {
                    Error::forest(
                        loc(),
                        format!("feature {} out of range (d = {d})", node.feature),
                    )
                })?;
                if !(meta.lo < node.threshold && node.threshold < meta.hi) {
                    return Err(Error::forest(
                        loc(),
                        format!(
                            "threshold {} not strictly inside domain [{}, {}] of feature {}",
                            node.threshold, meta.lo, meta.hi, node.feature
                        ),
                    ));
                }
                occurrences[node.feature] += 1;
            }
        }
        Ok(Self {
            features,
            trees,
            occurrences,
        })
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[FeatureMeta] {
        &self.features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, t: usize) -> &Tree {
        &self.trees[t]
    }

    /// Number of split nodes using each feature, across all trees.
    pub fn feature_occurrences(&self) -> &[usize] {
        &self.occurrences
    }

    pub fn domain(&self) -> FeatureBox {
        FeatureBox(self.features.iter().map(FeatureMeta::domain).collect())
    }

    pub fn mutable_mask(&self) -> Vec<bool> {
        self.features.iter().map(|f| f.mutable).collect()
    }

    pub fn has_equal_weights(&self) -> bool {
        let w0 = self.trees[0].weight;
        self.trees.iter().all(|t| t.weight == w0)
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.num_features() {
            return Err(Error::Input(format!(
                "point has {} coordinates, forest expects {}",
                x.len(),
                self.num_features()
            )));
        }
        if let Some(j) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("coordinate {j} is not finite")));
        }
        Ok(())
    }

    /// Weighted majority vote; an exact tie goes to class 0.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        self.check_point(x)?;
        let mut votes = [0.0; 2];
        let tree_votes = self
            .trees
            .iter()
            .map(|tree| {
                let class = tree.leaves[tree.leaf_of(x)].class;
                votes[class as usize] += tree.weight;
                class
            })
            .collect();
        let class = u8::from(votes[1] > votes[0]);
        Ok(Prediction {
            class,
            votes,
            tree_votes,
        })
    }

    pub fn leaf_box(&self, tree: usize, leaf: usize, epsilon: f64) -> Result<FeatureBox> {
        self.trees[tree].leaf_box(leaf, &self.domain(), epsilon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf_id(forest: &Forest, x: &[f64]) -> usize {
        let tree = forest.tree(0);
        tree.leaves()[tree.leaf_of(x)].id
    }

    fn stump(threshold: f64) -> Forest {
        let features = vec![FeatureMeta::continuous(0, "x0", Direction::Increase)];
        let tree = Tree::new(
            0,
            vec![NodeDoc {
                id: 0,
                feature: 0,
                threshold,
                left: 1,
                right: 2,
            }],
            vec![LeafDoc { id: 1, class: 0 }, LeafDoc { id: 2, class: 1 }],
            1.0,
        )
        .unwrap();
        Forest::new(features, vec![tree]).unwrap()
    }

    #[test]
    fn firefighter_predicts_yes_via_left_right() {
        let f = firefighter_forest();
        let p = f.predict(&[0.5, 0.9]).unwrap();
        assert_eq!(p.class, 1);
        assert_eq!(leaf_id(&f, &[0.5, 0.9]), FIREFIGHTER_LEAVES[1]);
    }

    #[test]
    fn single_leaf_tree_is_constant() {
        let features = vec![FeatureMeta::continuous(0, "x", Direction::Increase)];
        let tree = Tree::new(7, vec![], vec![LeafDoc { id: 7, class: 0 }], 1.0).unwrap();
        let f = Forest::new(features, vec![tree]).unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(f.predict(&[x]).unwrap().class, 0);
        }
        assert_eq!(f.tree(0).depth(), 0);
    }

    #[test]
    fn majority_of_three() {
        let leaf = |c| Tree::new(0, vec![], vec![LeafDoc { id: 0, class: c }], 1.0).unwrap();
        let features = vec![FeatureMeta::continuous(0, "x", Direction::Increase)];
        let f = Forest::new(features, vec![leaf(1), leaf(1), leaf(0)]).unwrap();
        let p = f.predict(&[0.2]).unwrap();
        assert_eq!(p.class, 1);
        assert_eq!(p.tree_votes, vec![1, 1, 0]);
    }

    #[test]
    fn tie_goes_to_class_zero() {
        let leaf = |c| Tree::new(0, vec![], vec![LeafDoc { id: 0, class: c }], 1.0).unwrap();
        let features = vec![FeatureMeta::continuous(0, "x", Direction::Increase)];
        let f = Forest::new(features, vec![leaf(1), leaf(0)]).unwrap();
        assert_eq!(f.predict(&[0.2]).unwrap().class, 0);
    }

    #[test]
    fn leaf_of_routing() {
        let f = firefighter_forest();
        assert_eq!(leaf_id(&f, &[0.69, 0.79]), FIREFIGHTER_LEAVES[0]);
        assert_eq!(leaf_id(&f, &[0.7, 0.6]), FIREFIGHTER_LEAVES[3]);
        let s = stump(0.5);
        assert_eq!(s.tree(0).leaves()[s.tree(0).leaf_of(&[0.5])].id, 2);
    }

    #[test]
    fn firefighter_leaf_box() {
        let f = firefighter_forest();
        let l1 = f.tree(0).leaf_position(FIREFIGHTER_LEAVES[1]).unwrap();
        let b = f.leaf_box(0, l1, 1e-6).unwrap();
        assert_eq!(b.0[0], Interval::new(0.0, 0.7 - 1e-6));
        assert_eq!(b.0[1], Interval::new(0.8, 1.0));
    }

    #[test]
    fn root_only_right_box() {
        let s = stump(0.4);
        let b = s.leaf_box(0, 1, 1e-6).unwrap();
        assert_eq!(b.0, vec![Interval::new(0.4, 1.0)]);
    }

    #[test]
    fn repeated_right_splits_intersect() {
        let features = vec![FeatureMeta::continuous(0, "x", Direction::Increase)];
        let tree = Tree::new(
            0,
            vec![
                NodeDoc {
                    id: 0,
                    feature: 0,
                    threshold: 0.3,
                    left: 1,
                    right: 2,
                },
                NodeDoc {
                    id: 2,
                    feature: 0,
                    threshold: 0.6,
                    left: 3,
                    right: 4,
                },
            ],
            vec![
                LeafDoc { id: 1, class: 0 },
                LeafDoc { id: 3, class: 0 },
                LeafDoc { id: 4, class: 1 },
            ],
            1.0,
        )
        .unwrap();
        let f = Forest::new(features, vec![tree]).unwrap();
        let l = f.tree(0).leaf_position(4).unwrap();
        assert_eq!(
            f.leaf_box(0, l, 1e-6).unwrap().0,
            vec![Interval::new(0.6, 1.0)]
        );
        assert_eq!(f.tree(0).depth(), 2);
    }

    #[test]
    fn epsilon_larger_than_gap_is_degenerate() {
        let s = stump(0.4);
        assert!(matches!(
            s.leaf_box(0, 0, 0.5),
            Err(Error::DegenerateBox { feature: 0, .. })
        ));
    }

    #[test]
    fn rejects_bad_structure() {
        let nodes = vec![NodeDoc {
            id: 0,
            feature: 0,
            threshold: 0.5,
            left: 1,
            right: 9,
        }];
        let err = Tree::new(0, nodes, vec![LeafDoc { id: 1, class: 0 }], 1.0).unwrap_err();
        assert!(err.to_string().contains("dangling child id 9"), "{err}");

        let err = Tree::new(0, vec![], vec![LeafDoc { id: 0, class: 2 }], 1.0).unwrap_err();
        assert!(err.to_string().contains("class 2"), "{err}");

        // Both children point at the same leaf.
        let nodes = vec![NodeDoc {
            id: 0,
            feature: 0,
            threshold: 0.5,
            left: 1,
            right: 1,
        }];
        assert!(Tree::new(0, nodes, vec![LeafDoc { id: 1, class: 0 }], 1.0).is_err());
    }

    #[test]
    fn rejects_feature_out_of_range() {
        let tree = Tree::new(
            0,
            vec![NodeDoc {
                id: 0,
                feature: 3,
                threshold: 0.5,
                left: 1,
                right: 2,
            }],
            vec![LeafDoc { id: 1, class: 0 }, LeafDoc { id: 2, class: 1 }],
            1.0,
        )
        .unwrap();
        let err = Forest::new(
            vec![FeatureMeta::continuous(0, "x", Direction::Increase)],
            vec![tree],
        )
        .unwrap_err();
        assert!(err.to_string().contains("tree 0, node 0"), "{err}");
    }

    #[test]
    fn occurrence_counts_match_scan() {
        let f = firefighter_forest();
        assert_eq!(f.feature_occurrences(), &[1, 2]);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        assert!(matches!(
            firefighter_forest().predict(&[0.1]),
            Err(Error::Input(_))
        ));
    }
}
