//! Reference answers computed by plain enumeration, straight from the tree
//! structure and the raw probability rows.

use probshift::forest::{Child, Forest};
use probshift::prob::NodeProbabilityTable;
use probshift::solver::{Kappa, MuDirection, Norm, Objective, ProblemInstance, SolverConfig};

pub struct LeafPath {
    pub class: u8,
    /// (node position, feature, threshold, went right)
    pub steps: Vec<(usize, usize, f64, bool)>,
}

pub fn leaf_paths(forest: &Forest, t: usize) -> Vec<LeafPath> {
    let tree = forest.tree(t);
    let mut out: Vec<(usize, LeafPath)> = Vec::new();
    let mut stack = vec![(tree.root(), Vec::new())];
    while let Some((child, steps)) = stack.pop() {
        match child {
            Child::Leaf(l) => out.push((
                l,
                LeafPath {
                    class: tree.leaves()[l].class,
                    steps,
                },
            )),
            Child::Node(n) => {
                let node = &tree.nodes()[n];
                let mut left = steps.clone();
                left.push((n, node.feature, node.threshold, false));
                let mut right = steps;
                right.push((n, node.feature, node.threshold, true));
                stack.push((node.left, left));
                stack.push((node.right, right));
            }
        }
    }
    out.sort_by_key(|(l, _)| *l);
    out.into_iter().map(|(_, p)| p).collect()
}

pub fn path_prob(table: &NodeProbabilityTable, t: usize, path: &LeafPath, effort: &[usize]) -> f64 {
    path.steps
        .iter()
        .map(|&(n, f, _, right)| {
            let p = table.rows()[t][n][effort[f]];
            if right {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

/// Every effort vector with per-feature cap `cap`, total at most `budget`,
/// and nothing on immutable features.
pub fn allocations(mutable: &[bool], cap: usize, budget: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &m in mutable {
        let mut next = Vec::new();
        for prefix in &out {
            let used: usize = prefix.iter().sum();
            let top = if m { cap.min(budget - used) } else { 0 };
            for v in 0..=top {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

type Bounds = Vec<(f64, f64)>;

fn leaf_bounds(forest: &Forest, path: &LeafPath, eps: f64) -> Bounds {
    let mut b: Bounds = forest.features().iter().map(|f| (f.lo, f.hi)).collect();
    for &(_, f, c, right) in &path.steps {
        if right {
            b[f].0 = b[f].0.max(c);
        } else {
            b[f].1 = b[f].1.min(c - eps);
        }
    }
    b
}

/// Leaf combinations (one leaf position per tree) whose regions overlap,
/// with the overlap.
pub fn combos(forest: &Forest, eps: f64) -> Vec<(Vec<usize>, Bounds)> {
    let per_tree: Vec<Vec<Bounds>> = (0..forest.trees().len())
        .map(|t| {
            leaf_paths(forest, t)
                .iter()
                .map(|p| leaf_bounds(forest, p, eps))
                .collect()
        })
        .collect();
    let start: Bounds = forest.features().iter().map(|f| (f.lo, f.hi)).collect();
    let mut out = Vec::new();
    let mut stack = vec![(Vec::new(), start)];
    while let Some((combo, b)) = stack.pop() {
        if combo.len() == per_tree.len() {
            out.push((combo, b));
            continue;
        }
        for (l, lb) in per_tree[combo.len()].iter().enumerate() {
            let joint: Bounds = b
                .iter()
                .zip(lb)
                .map(|(a, c)| (a.0.max(c.0), a.1.min(c.1)))
                .collect();
            if joint.iter().all(|(lo, hi)| lo <= hi) {
                let mut c = combo.clone();
                c.push(l);
                stack.push((c, joint));
            }
        }
    }
    out
}

/// Optimal objective value, or `None` when infeasible.
pub fn best_objective(
    forest: &Forest,
    instance: &ProblemInstance,
    table: Option<&NodeProbabilityTable>,
    config: &SolverConfig,
) -> Option<f64> {
    let r = forest.trees().len();
    let target = instance.target;
    let paths: Vec<Vec<LeafPath>> = (0..r).map(|t| leaf_paths(forest, t)).collect();
    let all = combos(forest, instance.epsilon);

    if config.objective == Objective::MinDistance {
        let mut best: Option<f64> = None;
        for (combo, b) in &all {
            let votes = combo
                .iter()
                .enumerate()
                .filter(|&(t, &l)| paths[t][l].class == target)
                .count();
            let wins = if target == 1 {
                2 * votes > r
            } else {
                2 * votes >= r
            };
            if !wins {
                continue;
            }
            let gaps = b
                .iter()
                .zip(&instance.x0)
                .map(|(&(lo, hi), &v)| (v.clamp(lo, hi) - v).abs());
            let d = match config.norm {
                Norm::L1 => gaps.sum(),
                Norm::L2 => gaps.map(|g| g * g).sum::<f64>().sqrt(),
                Norm::Linf => gaps.fold(0.0, f64::max),
            };
            best = Some(best.map_or(d, |x: f64| x.min(d)));
        }
        return best;
    }

    let table = table.expect("path objectives need a table");
    let m = r / 2 + 1;
    let mutable: Vec<bool> = forest.features().iter().map(|f| f.mutable).collect();
    let mut best: Option<f64> = None;
    for effort in allocations(&mutable, instance.max_effort, instance.eta) {
        // per tree: value of each target leaf as an essential tree
        let mut values: Vec<Vec<Option<f64>>> = Vec::with_capacity(r);
        let mut excluded = false;
        for (t, tp) in paths.iter().enumerate() {
            let probs: Vec<f64> = tp.iter().map(|p| path_prob(table, t, p, &effort)).collect();
            let positive: Vec<f64> = tp
                .iter()
                .zip(&probs)
                .filter(|(p, _)| p.class == target)
                .map(|(_, &v)| v)
                .collect();
            let tree_value: Option<f64> = match config.objective {
                Objective::MaxPath => None,
                Objective::MinPath => positive.iter().copied().reduce(f64::min),
                _ => {
                    if positive.is_empty() {
                        None
                    } else {
                        let mut theta: Vec<f64> = if config.positive_leaves_only {
                            positive.clone()
                        } else {
                            tp.iter()
                                .zip(&probs)
                                .map(|(p, &v)| if p.class == target { v } else { 1.0 })
                                .collect()
                        };
                        theta.sort_by(|a, b| a.partial_cmp(b).unwrap());
                        let n = theta.len();
                        let k = match config.kappa {
                            Kappa::Rank(k) => k.clamp(1, n),
                            Kappa::Fraction(f) => ((f * n as f64).ceil() as usize).clamp(1, n),
                        };
                        let lower: f64 = theta[..k - 1].iter().sum();
                        let ok = match config.mu_direction {
                            MuDirection::AtLeast => lower >= config.mu,
                            MuDirection::AtMost => lower <= config.mu,
                        };
                        if !ok {
                            excluded = true;
                        }
                        ok.then_some(theta[k - 1])
                    }
                }
            };
            values.push(
                tp.iter()
                    .zip(&probs)
                    .map(|(p, &v)| {
                        (p.class == target)
                            .then_some(())
                            .and(match config.objective {
                                Objective::MaxPath => Some(v),
                                _ => tree_value,
                            })
                    })
                    .collect(),
            );
        }
        if config.objective == Objective::KappaPath && config.strict_mu && excluded {
            continue;
        }
        for (combo, _) in &all {
            let mut vals: Vec<f64> = combo
                .iter()
                .enumerate()
                .filter_map(|(t, &l)| values[t][l])
                .collect();
            if vals.len() < m {
                continue;
            }
            vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let obj: f64 = vals[..m].iter().product();
            best = Some(best.map_or(obj, |x: f64| x.max(obj)));
        }
    }
    best
}
