//! Exact feature-shift solvers.
//!
//! Every probabilistic objective is solved by enumerating effort
//! allocations and, per allocation, running a branch and bound over
//! "essential" trees: the `m = floor(R/2) + 1` target-voting trees whose
//! values enter the objective product. The bound at a search node is the
//! running log-value plus the best `m - k` per-tree values still compatible
//! with the current box; boxes are intersected on the fly. Once `m` trees
//! are fixed the remaining trees are assigned the leaf that contains the
//! chosen point (or, when that point sits in an `epsilon` gap, any
//! compatible leaf), so every reported solution picks one leaf per tree.
//!
//! Objective values are accumulated as sums of logarithms; the reported
//! objective is the exponentiated sum over essential trees in tree order.

mod distance;
mod effort;
mod model;
mod oracle;
mod point;
mod profile;
mod search;
mod verify;

pub use effort::{allocation_count, enumerate_effort_allocations, EffortAllocation};
pub use oracle::{brute_force_oracle, DEFAULT_ORACLE_CAP};
pub use point::{box_distance, choose_point, point_distance};
pub use profile::{path_probability, tree_value_profile, TreeValueProfile};
pub use verify::{verify_solution, Verdict};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{FeatureBox, Forest, DEFAULT_EPSILON};
use crate::prob::NodeProbabilityTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxPath,
    MinPath,
    KappaPath,
    MinDistance,
}

impl Objective {
    pub fn is_probabilistic(self) -> bool {
        self != Objective::MinDistance
    }
}

/// Which order statistic the κ-path objective uses in each tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kappa {
    /// 1-based rank, clamped to the number of sorted values in each tree.
    Rank(usize),
    /// Share of each tree's sorted values: rank `max(1, ceil(f·n))`.
    Fraction(f64),
}

impl Kappa {
    pub fn rank_for(self, n: usize) -> usize {
        match self {
            Kappa::Rank(k) => k.min(n).max(1),
            Kappa::Fraction(f) => ((f * n as f64).ceil() as usize).clamp(1, n.max(1)),
        }
    }
}

/// Sense of the cumulative-probability side constraint of κ-path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuDirection {
    /// The `κ - 1` smallest values must sum to at least `μ`.
    AtLeast,
    /// The `κ - 1` smallest values must sum to at most `μ`.
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRule {
    ProjectX0,
    BoxCenter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub objective: Objective,
    pub kappa: Kappa,
    pub mu: f64,
    pub mu_direction: MuDirection,
    /// Apply the μ constraint to every tree, not only essential ones.
    pub strict_mu: bool,
    /// Sort only target-class leaves for κ-path (off-target leaves are
    /// otherwise included at value 1).
    pub positive_leaves_only: bool,
    pub norm: Norm,
    /// Per-feature distance weights; `None` means all ones.
    pub distance_weights: Option<Vec<f64>>,
    pub time_limit: Option<Duration>,
    pub point_rule: PointRule,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            objective: Objective::MaxPath,
            kappa: Kappa::Rank(1),
            mu: 1e-6,
            mu_direction: MuDirection::AtLeast,
            strict_mu: false,
            positive_leaves_only: false,
            norm: Norm::L1,
            distance_weights: None,
            time_limit: None,
            point_rule: PointRule::ProjectX0,
        }
    }
}

impl SolverConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            ..Self::default()
        }
    }

    pub fn kappa(mut self, kappa: Kappa, mu: f64) -> Self {
        self.kappa = kappa;
        self.mu = mu;
        self
    }

    pub fn validate(&self, forest: &Forest) -> Result<()> {
        let max_leaves = forest
            .trees()
            .iter()
            .map(|t| t.leaves().len())
            .max()
            .unwrap_or(1);
        match self.kappa {
            Kappa::Rank(k) if k == 0 || k > max_leaves => {
                return Err(Error::Validation(format!(
                    "kappa {k} outside 1..={max_leaves}"
                )));
            }
            Kappa::Fraction(f) if !(f > 0.0 && f <= 1.0) => {
                return Err(Error::Validation(format!(
                    "kappa fraction {f} outside (0, 1]"
                )));
            }
            _ => {}
        }
        if !(0.0..1.0).contains(&self.mu) {
            return Err(Error::Validation(format!("mu {} outside [0, 1)", self.mu)));
        }
        if let Some(w) = &self.distance_weights {
            if w.len() != forest.num_features() || w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Validation(
                    "distance weights must be d nonnegative numbers".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub x0: Vec<f64>,
    /// Desired class `k*`.
    pub target: u8,
    /// Total effort budget η.
    pub eta: usize,
    /// Maximum effort per feature E.
    pub max_effort: usize,
    pub epsilon: f64,
}

impl ProblemInstance {
    pub fn new(x0: Vec<f64>, target: u8, eta: usize, max_effort: usize) -> Self {
        Self {
            x0,
            target,
            eta,
            max_effort,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn validate(&self, forest: &Forest) -> Result<()> {
        forest.check_point(&self.x0)?;
        if self.target > 1 {
            return Err(Error::Input(format!(
                "target class {} outside {{0, 1}}",
                self.target
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Input(format!(
                "epsilon {} must be > 0",
                self.epsilon
            )));
        }
        for (j, (v, f)) in self.x0.iter().zip(forest.features()).enumerate() {
            if !f.domain().contains(*v) {
                return Err(Error::Input(format!(
                    "x0[{j}] = {v} outside domain [{}, {}]",
                    f.lo, f.hi
                )));
            }
        }
        Ok(())
    }
}

/// Number of target votes needed among `trees` equally weighted trees.
pub fn majority_threshold(trees: usize) -> usize {
    trees / 2 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeValue {
    pub tree: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Probability of the shift for the path objectives; the distance for
    /// the distance objective.
    pub objective: f64,
    /// Natural log of the objective for path objectives (absent when the
    /// objective is zero or for the distance objective).
    pub log_objective: Option<f64>,
    pub effort: EffortAllocation,
    /// Chosen leaf id for each tree, in tree order.
    pub chosen_leaves: Vec<usize>,
    /// Trees whose values enter the objective, ascending.
    pub essential_set: Vec<usize>,
    pub x: Vec<f64>,
    pub per_tree_values: Vec<TreeValue>,
    pub feasible_box: FeatureBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub objective_kind: Objective,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub nodes_explored: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solution: Option<Solution>,
}

impl SolveReport {
    pub fn objective(&self) -> Option<f64> {
        self.solution.as_ref().map(|s| s.objective)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }
}

fn check_probabilistic(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
) -> Result<()> {
    instance.validate(forest)?;
    config.validate(forest)?;
    if !forest.has_equal_weights() {
        return Err(Error::Validation(
            "path objectives require equal tree weights".into(),
        ));
    }
    table.check_shape(forest)?;
    if table.max_effort() < instance.max_effort {
        return Err(Error::Validation(format!(
            "table covers effort up to {}, instance asks for {}",
            table.max_effort(),
            instance.max_effort
        )));
    }
    Ok(())
}

fn solve_path(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
    objective: Objective,
) -> Result<SolveReport> {
    let config = SolverConfig {
        objective,
        ..config.clone()
    };
    check_probabilistic(forest, instance, table, &config)?;
    let allocations = enumerate_effort_allocations(
        forest.num_features(),
        instance.max_effort,
        instance.eta,
        &forest.mutable_mask(),
    );
    search::solve(forest, instance, table, &config, &allocations)
}

/// Best-path: maximize the product of the chosen target leaves' path
/// probabilities over the essential trees.
pub fn solve_max_path(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
) -> Result<SolveReport> {
    solve_path(forest, instance, table, config, Objective::MaxPath)
}

/// Worst-path: each essential tree contributes its least likely target leaf.
pub fn solve_min_path(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
) -> Result<SolveReport> {
    solve_path(forest, instance, table, config, Objective::MinPath)
}

/// κ-th-path: each essential tree contributes the κ-th smallest leaf value,
/// subject to the μ constraint.
pub fn solve_kappa_path(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
) -> Result<SolveReport> {
    solve_path(forest, instance, table, config, Objective::KappaPath)
}

/// Closest point (under the configured weighted norm) receiving the target
/// class. Unequal tree weights are allowed.
pub fn solve_min_distance(
    forest: &Forest,
    instance: &ProblemInstance,
    config: &SolverConfig,
) -> Result<SolveReport> {
    instance.validate(forest)?;
    config.validate(forest)?;
    distance::solve(forest, instance, config)
}

/// Dispatches on `config.objective`. The table may be omitted for the
/// distance objective only.
pub fn solve(
    forest: &Forest,
    instance: &ProblemInstance,
    table: Option<&NodeProbabilityTable>,
    config: &SolverConfig,
) -> Result<SolveReport> {
    match (config.objective, table) {
        (Objective::MinDistance, _) => solve_min_distance(forest, instance, config),
        (obj, Some(table)) => solve_path(forest, instance, table, config, obj),
        (_, None) => Err(Error::Input(
            "path objectives need a probability table".into(),
        )),
    }
}

/// Solves a path objective with the effort allocation held fixed.
pub fn solve_fixed_effort(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
    effort: &EffortAllocation,
) -> Result<SolveReport> {
    if !config.objective.is_probabilistic() {
        return Err(Error::Input(
            "fixed effort applies to path objectives only".into(),
        ));
    }
    check_probabilistic(forest, instance, table, config)?;
    effort.check(instance, &forest.mutable_mask())?;
    search::solve(
        forest,
        instance,
        table,
        config,
        std::slice::from_ref(effort),
    )
}
