//! Exhaustive reference solver for small instances.

use super::distance::vote_holds;
use super::point::point_distance;
use super::profile::{path_probability, tree_value_profile};
use super::{
    enumerate_effort_allocations, majority_threshold, EffortAllocation, Objective, ProblemInstance,
    Solution, SolveReport, SolverConfig, Status, TreeValue,
};
use crate::error::{Error, Result};
use crate::forest::{boxes_intersect, FeatureBox, Forest};
use crate::prob::NodeProbabilityTable;

/// Largest `leaf combinations × allocations` the oracle accepts by default.
pub const DEFAULT_ORACLE_CAP: u128 = 20_000_000;

/// Every leaf combination with a nonempty joint box, with that box.
fn feasible_combos(forest: &Forest, epsilon: f64) -> Vec<(Vec<usize>, FeatureBox)> {
    let boxes: Vec<Vec<Option<FeatureBox>>> = (0..forest.trees().len())
        .map(|t| {
            (0..forest.tree(t).leaves().len())
                .map(|l| forest.leaf_box(t, l, epsilon).ok())
                .collect()
        })
        .collect();
    let mut out = Vec::new();
    let mut combo = Vec::with_capacity(boxes.len());
    walk(&boxes, &forest.domain(), &mut combo, &mut out);
    out
}

fn walk(
    boxes: &[Vec<Option<FeatureBox>>],
    current: &FeatureBox,
    combo: &mut Vec<usize>,
    out: &mut Vec<(Vec<usize>, FeatureBox)>,
) {
    let t = combo.len();
    if t == boxes.len() {
        out.push((combo.clone(), current.clone()));
        return;
    }
    for (l, b) in boxes[t].iter().enumerate() {
        let Some(b) = b else { continue };
        if let Some(next) = boxes_intersect(&[current.clone(), b.clone()]) {
            combo.push(l);
            walk(boxes, &next, combo, out);
            combo.pop();
        }
    }
}

/// Solves by enumerating every allocation and every feasible leaf
/// combination. Fails with [`Error::OracleCap`] when the search space
/// exceeds `cap`.
pub fn brute_force_oracle(
    forest: &Forest,
    instance: &ProblemInstance,
    table: Option<&NodeProbabilityTable>,
    config: &SolverConfig,
    cap: u128,
) -> Result<SolveReport> {
    instance.validate(forest)?;
    config.validate(forest)?;
    let allocations = if config.objective.is_probabilistic() {
        enumerate_effort_allocations(
            forest.num_features(),
            instance.max_effort,
            instance.eta,
            &forest.mutable_mask(),
        )
    } else {
        vec![EffortAllocation::zeros(forest.num_features())]
    };
    let combinations = forest
        .trees()
        .iter()
        .fold(1u128, |acc, t| acc.saturating_mul(t.leaves().len() as u128))
        .saturating_mul(allocations.len() as u128);
    if combinations > cap {
        return Err(Error::OracleCap { combinations, cap });
    }
    let combos = feasible_combos(forest, instance.epsilon);
    match (config.objective, table) {
        (Objective::MinDistance, _) => Ok(distance(forest, instance, config, &combos)),
        (_, Some(table)) => Ok(paths(
            forest,
            instance,
            table,
            config,
            &allocations,
            &combos,
        )),
        (_, None) => Err(Error::Input(
            "path objectives need a probability table".into(),
        )),
    }
}

fn distance(
    forest: &Forest,
    instance: &ProblemInstance,
    config: &SolverConfig,
    combos: &[(Vec<usize>, FeatureBox)],
) -> SolveReport {
    let total: f64 = forest.trees().iter().map(|t| t.weight()).sum();
    let weights = config.distance_weights.as_deref();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    for (i, (combo, bx)) in combos.iter().enumerate() {
        let votes: f64 = combo
            .iter()
            .enumerate()
            .filter(|&(t, &l)| forest.tree(t).leaves()[l].class == instance.target)
            .map(|(t, _)| forest.tree(t).weight())
            .sum();
        if !vote_holds(instance.target, votes, total) {
            continue;
        }
        let x: Vec<f64> = bx
            .intervals()
            .iter()
            .zip(&instance.x0)
            .map(|(iv, &v)| iv.clamp(v))
            .collect();
        let d = point_distance(&instance.x0, &x, config.norm, weights);
        if best.as_ref().is_none_or(|(b, _, _)| d < *b) {
            best = Some((d, i, x));
        }
    }
    let solution = best.map(|(d, i, x)| {
        let (combo, bx) = &combos[i];
        Solution {
            objective: d,
            log_objective: None,
            effort: EffortAllocation::zeros(forest.num_features()),
            chosen_leaves: leaf_ids(forest, combo),
            essential_set: combo
                .iter()
                .enumerate()
                .filter(|&(t, &l)| forest.tree(t).leaves()[l].class == instance.target)
                .map(|(t, _)| t)
                .collect(),
            x,
            per_tree_values: Vec::new(),
            feasible_box: bx.clone(),
        }
    });
    report(Objective::MinDistance, solution, combos.len() as u64)
}

/// Log objective, allocation index, combo index, essential `(tree, value)` pairs.
type Incumbent = (f64, usize, usize, Vec<(usize, f64)>);

fn paths(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
    allocations: &[EffortAllocation],
    combos: &[(Vec<usize>, FeatureBox)],
) -> SolveReport {
    let m = majority_threshold(forest.trees().len());
    let target = instance.target;
    let mut best: Option<Incumbent> = None;
    let mut visited = 0u64;
    for (a, effort) in allocations.iter().enumerate() {
        // value[t][l] for target leaves that may be essential
        let mut value: Vec<Vec<Option<f64>>> = Vec::with_capacity(forest.trees().len());
        let mut any_excluded = false;
        for (t, tree) in forest.trees().iter().enumerate() {
            let row = if config.objective == Objective::MaxPath {
                (0..tree.leaves().len())
                    .map(|l| {
                        (tree.leaves()[l].class == target)
                            .then(|| path_probability(tree, t, l, table, effort))
                    })
                    .collect()
            } else {
                let p = tree_value_profile(tree, t, table, effort, target, config);
                if p.robust_value.is_some() && !p.mu_eligible {
                    any_excluded = true;
                }
                (0..tree.leaves().len())
                    .map(|l| {
                        if tree.leaves()[l].class == target {
                            p.essential_value()
                        } else {
                            None
                        }
                    })
                    .collect()
            };
            value.push(row);
        }
        if config.objective == Objective::KappaPath && config.strict_mu && any_excluded {
            continue;
        }
        for (i, (combo, _)) in combos.iter().enumerate() {
            visited += 1;
            let mut vals: Vec<(usize, f64)> = combo
                .iter()
                .enumerate()
                .filter_map(|(t, &l)| value[t][l].map(|v| (t, v)))
                .collect();
            if vals.len() < m {
                continue;
            }
            vals.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
            vals.truncate(m);
            vals.sort_by_key(|v| v.0);
            let log: f64 = vals.iter().map(|(_, v)| v.ln()).sum();
            if best.as_ref().is_none_or(|(b, ..)| log > *b) {
                best = Some((log, a, i, vals));
            }
        }
    }
    let solution = best.map(|(log, a, i, vals)| {
        let (combo, bx) = &combos[i];
        Solution {
            objective: vals.iter().map(|(_, v)| v).product(),
            log_objective: log.is_finite().then_some(log),
            effort: allocations[a].clone(),
            chosen_leaves: leaf_ids(forest, combo),
            essential_set: vals.iter().map(|(t, _)| *t).collect(),
            x: super::choose_point(bx, &instance.x0, config.point_rule).expect("nonempty box"),
            per_tree_values: vals
                .iter()
                .map(|&(tree, value)| TreeValue { tree, value })
                .collect(),
            feasible_box: bx.clone(),
        }
    });
    let mut rep = report(config.objective, solution, visited);
    if rep.status == Status::Infeasible && config.objective == Objective::KappaPath {
        rep.message = Some(format!(
            "no mu-eligible essential set for kappa {}",
            config.kappa.describe()
        ));
    }
    rep
}

fn leaf_ids(forest: &Forest, combo: &[usize]) -> Vec<usize> {
    combo
        .iter()
        .enumerate()
        .map(|(t, &l)| forest.tree(t).leaves()[l].id)
        .collect()
}

fn report(objective_kind: Objective, solution: Option<Solution>, nodes: u64) -> SolveReport {
    SolveReport {
        status: if solution.is_some() {
            Status::Optimal
        } else {
            Status::Infeasible
        },
        objective_kind,
        message: solution
            .is_none()
            .then(|| "no feasible leaf combination".to_string()),
        nodes_explored: nodes,
        solution,
    }
}
