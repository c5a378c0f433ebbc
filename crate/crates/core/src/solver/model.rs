//! Preprocessed search data shared by the solvers and the oracle.

use super::profile::{path_probability, tree_value_profile};
use super::{EffortAllocation, Objective, SolverConfig};
use crate::forest::{FeatureBox, Forest, Interval};
use crate::prob::NodeProbabilityTable;

/// Bounds a leaf imposes on the features its path tests.
pub(crate) type LeafBounds = Vec<(usize, Interval)>;

/// Sparse leaf boxes: only the features constrained on each path.
pub(crate) struct Geometry {
    pub domain: Vec<Interval>,
    /// `leaves[tree][leaf]`, `None` when the box is empty under epsilon.
    pub leaves: Vec<Vec<Option<LeafBounds>>>,
}

impl Geometry {
    pub fn new(forest: &Forest, epsilon: f64) -> Self {
        let domain = forest.domain().0;
        let leaves = forest
            .trees()
            .iter()
            .map(|tree| {
                (0..tree.leaves().len())
                    .map(|l| {
                        let mut cons: Vec<(usize, Interval)> = Vec::new();
                        for step in tree.path(l) {
                            let idx = match cons.iter().position(|(f, _)| *f == step.feature) {
                                Some(i) => i,
                                None => {
                                    cons.push((step.feature, domain[step.feature]));
                                    cons.len() - 1
                                }
                            };
                            let iv = &mut cons[idx].1;
                            if step.right {
                                iv.lo = iv.lo.max(step.threshold);
                            } else {
                                iv.hi = iv.hi.min(step.threshold - epsilon);
                            }
                        }
                        (!cons.iter().any(|(_, iv)| iv.is_empty())).then_some(cons)
                    })
                    .collect()
            })
            .collect();
        Self { domain, leaves }
    }

    pub fn compatible(&self, tree: usize, leaf: usize, bx: &[Interval]) -> bool {
        match &self.leaves[tree][leaf] {
            None => false,
            Some(cons) => cons.iter().all(|(f, iv)| !bx[*f].intersect(iv).is_empty()),
        }
    }

    pub fn apply(&self, tree: usize, leaf: usize, bx: &mut [Interval]) {
        if let Some(cons) = &self.leaves[tree][leaf] {
            for (f, iv) in cons {
                bx[*f] = bx[*f].intersect(iv);
            }
        }
    }

    pub fn contains(&self, tree: usize, leaf: usize, x: &[f64]) -> bool {
        match &self.leaves[tree][leaf] {
            None => false,
            Some(cons) => cons.iter().all(|(f, iv)| iv.contains(x[*f])),
        }
    }

    pub fn joint_box(&self, combo: &[usize]) -> Option<FeatureBox> {
        let mut bx = self.domain.clone();
        for (t, &l) in combo.iter().enumerate() {
            if !self.compatible(t, l, &bx) {
                return None;
            }
            self.apply(t, l, &mut bx);
        }
        Some(FeatureBox(bx))
    }
}

/// Values the trees can contribute as essential trees under one allocation.
#[derive(Debug, Clone)]
pub(crate) struct Scores {
    /// `value[tree][leaf]`: contribution if `leaf` is chosen in an
    /// essential tree; `None` for leaves that cannot be essential.
    pub value: Vec<Vec<Option<f64>>>,
    /// Some positive tree failed the μ constraint.
    pub mu_excluded: bool,
}

impl Scores {
    pub fn compute(
        forest: &Forest,
        table: &NodeProbabilityTable,
        effort: &EffortAllocation,
        target: u8,
        config: &SolverConfig,
    ) -> Self {
        let mut mu_excluded = false;
        let mut value: Vec<Vec<Option<f64>>> = forest
            .trees()
            .iter()
            .enumerate()
            .map(|(t, tree)| {
                let positive = |l: usize| tree.leaves()[l].class == target;
                match config.objective {
                    Objective::MaxPath => (0..tree.leaves().len())
                        .map(|l| positive(l).then(|| path_probability(tree, t, l, table, effort)))
                        .collect(),
                    _ => {
                        let profile = tree_value_profile(tree, t, table, effort, target, config);
                        if profile.robust_value.is_some() && !profile.mu_eligible {
                            mu_excluded = true;
                        }
                        let v = profile.essential_value();
                        (0..tree.leaves().len())
                            .map(|l| if positive(l) { v } else { None })
                            .collect()
                    }
                }
            })
            .collect();
        if config.objective == Objective::KappaPath && config.strict_mu && mu_excluded {
            // every tree must satisfy the constraint in strict mode
            for row in &mut value {
                row.iter_mut().for_each(|v| *v = None);
            }
        }
        Self { value, mu_excluded }
    }

    pub fn tree_max(&self, tree: usize) -> Option<f64> {
        self.value[tree].iter().flatten().copied().reduce(f64::max)
    }
}

/// Objective of a full leaf combination: the `m` best essential-capable
/// trees (ties to the lower tree index), summed in log space in tree order.
pub(crate) struct Evaluation {
    pub log: f64,
    /// `(tree, value)` ascending by tree.
    pub essential: Vec<(usize, f64)>,
}

pub(crate) fn evaluate(combo: &[usize], scores: &Scores, m: usize) -> Option<Evaluation> {
    let mut cands: Vec<(usize, f64)> = combo
        .iter()
        .enumerate()
        .filter_map(|(t, &l)| scores.value[t][l].map(|v| (t, v)))
        .collect();
    if cands.len() < m {
        return None;
    }
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(m);
    cands.sort_by_key(|c| c.0);
    let log = cands.iter().map(|(_, v)| v.ln()).sum();
    Some(Evaluation {
        log,
        essential: cands,
    })
}

/// Assigns leaves to the trees not fixed in `chosen` so that the joint box
/// stays nonempty. Tries the leaf containing `hint` first.
pub(crate) fn complete(
    forest: &Forest,
    geom: &Geometry,
    bx: &mut Vec<Interval>,
    chosen: &mut [Option<usize>],
    hint: &[f64],
) -> bool {
    // fast path: hint lies in a leaf of every free tree
    let mut fast = true;
    let mut picks = Vec::new();
    for (t, c) in chosen.iter().enumerate() {
        if c.is_none() {
            let l = forest.tree(t).leaf_of(hint);
            if geom.contains(t, l, hint) {
                picks.push((t, l));
            } else {
                fast = false;
                break;
            }
        }
    }
    if fast && bx.iter().zip(hint).all(|(iv, &v)| iv.contains(v)) {
        for (t, l) in picks {
            chosen[t] = Some(l);
            geom.apply(t, l, bx);
        }
        return true;
    }
    complete_dfs(forest, geom, bx, chosen, hint, 0)
}

fn complete_dfs(
    forest: &Forest,
    geom: &Geometry,
    bx: &mut Vec<Interval>,
    chosen: &mut [Option<usize>],
    hint: &[f64],
    from: usize,
) -> bool {
    let Some(t) = (from..chosen.len()).find(|&t| chosen[t].is_none()) else {
        return true;
    };
    let preferred = forest.tree(t).leaf_of(hint);
    let n = forest.tree(t).leaves().len();
    let order = std::iter::once(preferred).chain((0..n).filter(|&l| l != preferred));
    for l in order {
        if !geom.compatible(t, l, bx) {
            continue;
        }
        let saved = bx.clone();
        geom.apply(t, l, bx);
        chosen[t] = Some(l);
        if complete_dfs(forest, geom, bx, chosen, hint, t + 1) {
            return true;
        }
        chosen[t] = None;
        *bx = saved;
    }
    false
}
