//! Branch and bound for the distance objective.

use std::time::Instant;

use super::model::{complete, Geometry};
use super::point::{box_distance, point_distance};
use super::{
    EffortAllocation, Objective, ProblemInstance, Solution, SolveReport, SolverConfig, Status,
};
use crate::error::Result;
use crate::forest::{Forest, Interval};

/// Whether `target_weight` out of `total` decides the vote for `target`.
/// Class 0 wins ties, so it only needs half.
pub(crate) fn vote_holds(target: u8, target_weight: f64, total: f64) -> bool {
    if target == 0 {
        target_weight >= total - target_weight
    } else {
        target_weight > total - target_weight
    }
}

struct Search<'a> {
    forest: &'a Forest,
    geom: &'a Geometry,
    instance: &'a ProblemInstance,
    config: &'a SolverConfig,
    weights: Option<&'a [f64]>,
    total: f64,
    /// Trees by weight, heaviest first.
    order: Vec<usize>,
    /// `suffix[i]`: weight of `order[i..]`.
    suffix: Vec<f64>,
    /// Target-class leaves per tree.
    targets: Vec<Vec<usize>>,
    deadline: Option<Instant>,
    timed_out: bool,
    nodes: u64,
    best: Option<(f64, Vec<usize>)>,
    bx: Vec<Interval>,
    chosen: Vec<Option<usize>>,
}

impl Search<'_> {
    fn dist(&self, bx: &[Interval]) -> f64 {
        box_distance(&self.instance.x0, bx, self.config.norm, self.weights)
    }

    fn tick(&mut self) -> bool {
        self.nodes += 1;
        if self.timed_out {
            return false;
        }
        if let Some(deadline) = self.deadline {
            if self.nodes.is_multiple_of(256) && Instant::now() >= deadline {
                self.timed_out = true;
                return false;
            }
        }
        true
    }

    fn dfs(&mut self, i: usize, ws: f64) {
        if !self.tick() {
            return;
        }
        let bound = self.dist(&self.bx);
        if self.best.as_ref().is_some_and(|(d, _)| bound >= *d) {
            return;
        }
        let target = self.instance.target;
        if vote_holds(target, ws, self.total) {
            self.finish();
            return;
        }
        if i == self.order.len() || !vote_holds(target, ws + self.suffix[i], self.total) {
            return;
        }
        let t = self.order[i];
        let w = self.forest.tree(t).weight();
        let mut leaves: Vec<(f64, usize)> = self.targets[t]
            .iter()
            .filter(|&&l| self.geom.compatible(t, l, &self.bx))
            .map(|&l| {
                let mut b = self.bx.clone();
                self.geom.apply(t, l, &mut b);
                (self.dist(&b), l)
            })
            .collect();
        leaves.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, l) in leaves {
            let saved = self.bx.clone();
            self.geom.apply(t, l, &mut self.bx);
            self.chosen[t] = Some(l);
            self.dfs(i + 1, ws + w);
            self.chosen[t] = None;
            self.bx = saved;
            if self.timed_out {
                return;
            }
        }
        self.dfs(i + 1, ws);
    }

    fn finish(&mut self) {
        let hint: Vec<f64> = self
            .bx
            .iter()
            .zip(&self.instance.x0)
            .map(|(iv, &v)| iv.clamp(v))
            .collect();
        let mut bx = self.bx.clone();
        let mut chosen = self.chosen.clone();
        if !complete(self.forest, self.geom, &mut bx, &mut chosen, &hint) {
            return;
        }
        let d = self.dist(&bx);
        if self.best.as_ref().is_none_or(|(b, _)| d < *b) {
            self.best = Some((
                d,
                chosen.into_iter().map(|c| c.expect("completed")).collect(),
            ));
        }
    }
}

pub(crate) fn solve(
    forest: &Forest,
    instance: &ProblemInstance,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    let geom = Geometry::new(forest, instance.epsilon);
    let mut order: Vec<usize> = (0..forest.trees().len()).collect();
    order.sort_by(|&a, &b| {
        forest
            .tree(b)
            .weight()
            .total_cmp(&forest.tree(a).weight())
            .then(a.cmp(&b))
    });
    let mut suffix = vec![0.0; order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix[i] = suffix[i + 1] + forest.tree(order[i]).weight();
    }
    let targets = forest
        .trees()
        .iter()
        .map(|tree| {
            (0..tree.leaves().len())
                .filter(|&l| tree.leaves()[l].class == instance.target)
                .collect()
        })
        .collect();
    let mut search = Search {
        forest,
        geom: &geom,
        instance,
        config,
        weights: config.distance_weights.as_deref(),
        total: suffix[0],
        order,
        suffix,
        targets,
        deadline: config.time_limit.map(|d| start + d),
        timed_out: false,
        nodes: 0,
        best: None,
        bx: geom.domain.clone(),
        chosen: vec![None; forest.trees().len()],
    };
    search.dfs(0, 0.0);

    let status = match (&search.best, search.timed_out) {
        (_, true) => Status::Timeout,
        (Some(_), false) => Status::Optimal,
        (None, false) => Status::Infeasible,
    };
    let solution = search
        .best
        .as_ref()
        .map(|(_, combo)| distance_solution(forest, &geom, instance, config, combo));
    let message = match status {
        Status::Infeasible => Some(format!(
            "no point in the domain is classified as {}",
            instance.target
        )),
        Status::Timeout => Some("time limit reached".to_string()),
        Status::Optimal => None,
    };
    Ok(SolveReport {
        status,
        objective_kind: Objective::MinDistance,
        message,
        nodes_explored: search.nodes,
        solution,
    })
}

pub(crate) fn distance_solution(
    forest: &Forest,
    geom: &Geometry,
    instance: &ProblemInstance,
    config: &SolverConfig,
    combo: &[usize],
) -> Solution {
    let feasible_box = geom.joint_box(combo).expect("feasible combo");
    let x: Vec<f64> = feasible_box
        .intervals()
        .iter()
        .zip(&instance.x0)
        .map(|(iv, &v)| iv.clamp(v))
        .collect();
    Solution {
        objective: point_distance(
            &instance.x0,
            &x,
            config.norm,
            config.distance_weights.as_deref(),
        ),
        log_objective: None,
        effort: EffortAllocation::zeros(forest.num_features()),
        chosen_leaves: combo
            .iter()
            .enumerate()
            .map(|(t, &l)| forest.tree(t).leaves()[l].id)
            .collect(),
        essential_set: combo
            .iter()
            .enumerate()
            .filter(|&(t, &l)| forest.tree(t).leaves()[l].class == instance.target)
            .map(|(t, _)| t)
            .collect(),
        x,
        per_tree_values: Vec::new(),
        feasible_box,
    }
}
