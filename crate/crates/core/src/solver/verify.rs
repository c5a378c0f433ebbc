//! Independent feasibility and objective checks for a reported solution.

use serde::{Deserialize, Serialize};

use super::distance::vote_holds;
use super::point::point_distance;
use super::profile::{path_probability, tree_value_profile};
use super::{majority_threshold, Objective, ProblemInstance, Solution, SolverConfig};
use crate::forest::Forest;
use crate::prob::NodeProbabilityTable;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    /// One entry per failed check, prefixed by the check's name.
    pub failures: Vec<String>,
}

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

/// Re-derives everything a solution claims from the forest and the table.
pub fn verify_solution(
    forest: &Forest,
    instance: &ProblemInstance,
    table: Option<&NodeProbabilityTable>,
    config: &SolverConfig,
    solution: &Solution,
) -> Verdict {
    let mut failures = Vec::new();
    let mut fail = |check: &str, msg: String| failures.push(format!("{check}: {msg}"));
    let r = forest.trees().len();

    if let Err(e) = solution.effort.check(instance, &forest.mutable_mask()) {
        fail("effort budget", e.to_string());
    }
    if solution.chosen_leaves.len() != r {
        fail(
            "leaf box",
            format!(
                "{} leaves chosen for {r} trees",
                solution.chosen_leaves.len()
            ),
        );
        return Verdict {
            passed: false,
            failures,
        };
    }
    if solution.x.len() != forest.num_features() || forest.check_point(&solution.x).is_err() {
        fail("box intersection", "point has the wrong shape".into());
        return Verdict {
            passed: false,
            failures,
        };
    }

    // the chosen leaves must exist, be reached by x, and their boxes must meet
    let mut positions = Vec::with_capacity(r);
    let mut boxes = Vec::with_capacity(r);
    for (t, &id) in solution.chosen_leaves.iter().enumerate() {
        let Some(l) = forest.tree(t).leaf_position(id) else {
            fail("leaf box", format!("tree {t} has no leaf {id}"));
            return Verdict {
                passed: false,
                failures,
            };
        };
        positions.push(l);
        if forest.tree(t).leaf_of(&solution.x) != l {
            fail(
                "leaf box",
                format!("x does not reach leaf {id} of tree {t}"),
            );
        }
        match forest.leaf_box(t, l, instance.epsilon) {
            Ok(b) => boxes.push(b),
            Err(e) => fail("leaf box", e.to_string()),
        }
    }
    match crate::forest::boxes_intersect(&boxes) {
        None => fail(
            "box intersection",
            "chosen leaf boxes do not intersect".into(),
        ),
        Some(joint) => {
            if !joint.contains(&solution.x) {
                fail("box intersection", "x lies outside the joint box".into());
            }
        }
    }
    if !solution.feasible_box.contains(&solution.x) {
        fail("box intersection", "x lies outside the reported box".into());
    }

    let target = instance.target;
    let votes: Vec<bool> = positions
        .iter()
        .enumerate()
        .map(|(t, &l)| forest.tree(t).leaves()[l].class == target)
        .collect();

    if config.objective == Objective::MinDistance {
        let total: f64 = forest.trees().iter().map(|t| t.weight()).sum();
        let won: f64 = (0..r)
            .filter(|&t| votes[t])
            .map(|t| forest.tree(t).weight())
            .sum();
        if !vote_holds(target, won, total)
            || forest.predict(&solution.x).ok().map(|p| p.class) != Some(target)
        {
            fail("majority", format!("x is not classified as {target}"));
        }
        let d = point_distance(
            &instance.x0,
            &solution.x,
            config.norm,
            config.distance_weights.as_deref(),
        );
        if !close(d, solution.objective) {
            fail(
                "objective",
                format!("reported {} but distance is {d}", solution.objective),
            );
        }
        return Verdict {
            passed: failures.is_empty(),
            failures,
        };
    }

    let m = majority_threshold(r);
    if votes.iter().filter(|&&v| v).count() < m {
        fail("majority", format!("fewer than {m} trees vote {target}"));
    }
    if solution.essential_set.len() != m || solution.per_tree_values.len() != m {
        fail("essential set", format!("expected {m} essential trees"));
    }
    let Some(table) = table else {
        fail("objective", "no probability table to check against".into());
        return Verdict {
            passed: false,
            failures,
        };
    };
    let mut product = 1.0;
    for (&t, tv) in solution.essential_set.iter().zip(&solution.per_tree_values) {
        if tv.tree != t || t >= r {
            fail("essential set", format!("tree {t} out of order or range"));
            continue;
        }
        if !votes[t] {
            fail(
                "essential set",
                format!("essential tree {t} does not vote {target}"),
            );
        }
        let tree = forest.tree(t);
        let value = if config.objective == Objective::MaxPath {
            path_probability(tree, t, positions[t], table, &solution.effort)
        } else {
            let p = tree_value_profile(tree, t, table, &solution.effort, target, config);
            if config.objective == Objective::KappaPath && !p.mu_eligible {
                fail(
                    "mu eligibility",
                    format!("tree {t} violates the mu constraint"),
                );
            }
            p.robust_value.unwrap_or(0.0)
        };
        if !close(value, tv.value) {
            fail(
                "objective",
                format!("tree {t} reported {} but is worth {value}", tv.value),
            );
        }
        product *= value;
    }
    if config.objective == Objective::KappaPath && config.strict_mu {
        for (t, tree) in forest.trees().iter().enumerate() {
            let p = tree_value_profile(tree, t, table, &solution.effort, target, config);
            if p.robust_value.is_some() && !p.mu_eligible {
                fail(
                    "mu eligibility",
                    format!("tree {t} violates the mu constraint"),
                );
            }
        }
    }
    if !close(product, solution.objective) {
        fail(
            "objective",
            format!("reported {} but product is {product}", solution.objective),
        );
    }
    Verdict {
        passed: failures.is_empty(),
        failures,
    }
}
