use super::{EffortAllocation, Kappa, MuDirection, Objective, SolverConfig};
use crate::forest::Tree;
use crate::prob::NodeProbabilityTable;

/// Probability of following the root-to-`leaf` path of tree `tree_index`
/// when each split uses the row for its feature's effort level.
pub fn path_probability(
    tree: &Tree,
    tree_index: usize,
    leaf: usize,
    table: &NodeProbabilityTable,
    effort: &EffortAllocation,
) -> f64 {
    tree.path(leaf)
        .iter()
        .map(|step| {
            let p = table.right_prob(tree_index, step.node, effort.level(step.feature));
            if step.right {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

/// Per-leaf values of one tree under one effort allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeValueProfile {
    /// Path probability for target-class leaves, 1 for the others.
    pub leaf_theta: Vec<f64>,
    /// Values the order statistic is taken over, ascending.
    pub sorted_theta: Vec<f64>,
    /// Minimum, κ-th smallest or maximum value as configured; `None` when
    /// the tree has no target-class leaf.
    pub robust_value: Option<f64>,
    /// 1-based rank used for the κ-th order statistic.
    pub kappa_rank: usize,
    /// Whether the μ side constraint holds for this tree.
    pub mu_eligible: bool,
}

impl TreeValueProfile {
    /// Value the tree contributes as an essential tree, if it may be one.
    pub fn essential_value(&self) -> Option<f64> {
        self.robust_value.filter(|_| self.mu_eligible)
    }
}

pub fn tree_value_profile(
    tree: &Tree,
    tree_index: usize,
    table: &NodeProbabilityTable,
    effort: &EffortAllocation,
    target: u8,
    config: &SolverConfig,
) -> TreeValueProfile {
    let leaf_theta: Vec<f64> = (0..tree.leaves().len())
        .map(|l| {
            if tree.leaves()[l].class == target {
                path_probability(tree, tree_index, l, table, effort)
            } else {
                1.0
            }
        })
        .collect();
    let positive: Vec<f64> = tree
        .leaves()
        .iter()
        .zip(&leaf_theta)
        .filter(|(leaf, _)| leaf.class == target)
        .map(|(_, &v)| v)
        .collect();

    let mut sorted_theta = if config.positive_leaves_only {
        positive.clone()
    } else {
        leaf_theta.clone()
    };
    sorted_theta.sort_by(f64::total_cmp);

    let kappa_rank = config.kappa.rank_for(sorted_theta.len());
    let lower_mass: f64 = sorted_theta.iter().take(kappa_rank - 1).sum();
    let mu_eligible = match config.objective {
        Objective::KappaPath => match config.mu_direction {
            MuDirection::AtLeast => lower_mass >= config.mu,
            MuDirection::AtMost => lower_mass <= config.mu,
        },
        _ => true,
    };
    let robust_value = if positive.is_empty() {
        None
    } else {
        match config.objective {
            Objective::MinPath => positive.iter().copied().reduce(f64::min),
            Objective::KappaPath => Some(sorted_theta[kappa_rank - 1]),
            Objective::MaxPath | Objective::MinDistance => {
                positive.iter().copied().reduce(f64::max)
            }
        }
    };
    TreeValueProfile {
        leaf_theta,
        sorted_theta,
        robust_value,
        kappa_rank,
        mu_eligible,
    }
}

impl Kappa {
    pub(crate) fn describe(self) -> String {
        match self {
            Kappa::Rank(k) => format!("rank {k}"),
            Kappa::Fraction(f) => format!("{:.0}% of leaves", f * 100.0),
        }
    }
}
