//! Branch and bound for the path objectives.

use std::time::Instant;

use super::model::{complete, evaluate, Geometry, Scores};
use super::{
    choose_point, majority_threshold, EffortAllocation, Objective, ProblemInstance, Solution,
    SolveReport, SolverConfig, Status, TreeValue,
};
use crate::error::Result;
use crate::forest::{FeatureBox, Forest, Interval};
use crate::prob::NodeProbabilityTable;

#[derive(Debug, Clone)]
struct Incumbent {
    log: f64,
    alloc: usize,
    combo: Vec<usize>,
    essential: Vec<(usize, f64)>,
}

impl Incumbent {
    /// Would a solution with log-value `log` from allocation `alloc` win?
    /// Equal values go to the earlier allocation.
    fn beaten_by(&self, log: f64, alloc: usize) -> bool {
        log > self.log || (log == self.log && alloc < self.alloc)
    }
}

struct Search<'a> {
    forest: &'a Forest,
    geom: &'a Geometry,
    x0: &'a [f64],
    config: &'a SolverConfig,
    m: usize,
    deadline: Option<Instant>,
    timed_out: bool,
    nodes: u64,
    best: Option<Incumbent>,
    // per-allocation state
    alloc: usize,
    scores: Option<Scores>,
    /// Candidate leaves per tree as `(leaf, log value)`, best first.
    cands: Vec<Vec<(usize, f64)>>,
    order: Vec<usize>,
    bx: Vec<Interval>,
    chosen: Vec<Option<usize>>,
}

impl<'a> Search<'a> {
    fn can_improve(&self, bound: f64) -> bool {
        self.best
            .as_ref()
            .is_none_or(|b| b.beaten_by(bound, self.alloc))
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

    fn run_allocation(&mut self, alloc: usize, scores: Scores) {
        let r = self.forest.trees().len();
        self.alloc = alloc;
        self.cands = (0..r)
            .map(|t| {
                let tree = self.forest.tree(t);
                let mut c: Vec<(usize, f64)> = scores.value[t]
                    .iter()
                    .enumerate()
                    .filter_map(|(l, v)| v.map(|v| (l, v.ln())))
                    .filter(|&(l, _)| self.geom.leaves[t][l].is_some())
                    .collect();
                c.sort_by(|a, b| {
                    b.1.total_cmp(&a.1)
                        .then(tree.leaves()[a.0].id.cmp(&tree.leaves()[b.0].id))
                });
                c
            })
            .collect();
        let mut order: Vec<usize> = (0..r).filter(|&t| !self.cands[t].is_empty()).collect();
        order.sort_by(|&a, &b| {
            self.cands[b][0]
                .1
                .total_cmp(&self.cands[a][0].1)
                .then(a.cmp(&b))
        });
        self.order = order;
        self.scores = Some(scores);
        self.bx = self.geom.domain.clone();
        self.chosen = vec![None; r];
        self.dfs(0, 0, 0.0);
    }

    fn dfs(&mut self, i: usize, k: usize, cur: f64) {
        if !self.tick() {
            return;
        }
        if k == self.m {
            self.finish();
            return;
        }
        let need = self.m - k;
        let mut tops: Vec<f64> = self.order[i..]
            .iter()
            .filter_map(|&t| {
                self.cands[t]
                    .iter()
                    .find(|&&(l, _)| self.geom.compatible(t, l, &self.bx))
                    .map(|&(_, v)| v)
            })
            .collect();
        if tops.len() < need {
            return;
        }
        tops.sort_by(|a, b| b.total_cmp(a));
        let bound = cur + tops[..need].iter().sum::<f64>();
        if !self.can_improve(bound) {
            return;
        }
        let t = self.order[i];
        for c in 0..self.cands[t].len() {
            let (l, v) = self.cands[t][c];
            if !self.geom.compatible(t, l, &self.bx) {
                continue;
            }
            let saved = self.bx.clone();
            self.geom.apply(t, l, &mut self.bx);
            self.chosen[t] = Some(l);
            self.dfs(i + 1, k + 1, cur + v);
            self.chosen[t] = None;
            self.bx = saved;
            if self.timed_out {
                return;
            }
        }
        if self.order.len() - (i + 1) >= need {
            self.dfs(i + 1, k, cur);
        }
    }

    fn finish(&mut self) {
        let hint = choose_point(
            &FeatureBox(self.bx.clone()),
            self.x0,
            self.config.point_rule,
        )
        .expect("search boxes are nonempty");
        let mut bx = self.bx.clone();
        let mut chosen = self.chosen.clone();
        if !complete(self.forest, self.geom, &mut bx, &mut chosen, &hint) {
            return;
        }
        let combo: Vec<usize> = chosen.into_iter().map(|c| c.expect("completed")).collect();
        let scores = self.scores.as_ref().expect("scores set per allocation");
        let Some(eval) = evaluate(&combo, scores, self.m) else {
            return;
        };
        if self
            .best
            .as_ref()
            .is_none_or(|b| b.beaten_by(eval.log, self.alloc))
        {
            self.best = Some(Incumbent {
                log: eval.log,
                alloc: self.alloc,
                combo,
                essential: eval.essential,
            });
        }
    }
}

/// Builds the reported solution for a full leaf combination.
pub(crate) fn build_solution(
    forest: &Forest,
    geom: &Geometry,
    instance: &ProblemInstance,
    config: &SolverConfig,
    effort: &EffortAllocation,
    combo: &[usize],
    essential: &[(usize, f64)],
) -> Solution {
    let feasible_box = geom
        .joint_box(combo)
        .expect("incumbent combos are feasible");
    let x = choose_point(&feasible_box, &instance.x0, config.point_rule).expect("nonempty box");
    let objective: f64 = essential.iter().map(|(_, v)| v).product();
    let log: f64 = essential.iter().map(|(_, v)| v.ln()).sum();
    Solution {
        objective,
        log_objective: log.is_finite().then_some(log),
        effort: effort.clone(),
        chosen_leaves: combo
            .iter()
            .enumerate()
            .map(|(t, &l)| forest.tree(t).leaves()[l].id)
            .collect(),
        essential_set: essential.iter().map(|(t, _)| *t).collect(),
        x,
        per_tree_values: essential
            .iter()
            .map(|&(tree, value)| TreeValue { tree, value })
            .collect(),
        feasible_box,
    }
}

pub(crate) fn infeasible_message(config: &SolverConfig, target: u8, mu_excluded: bool) -> String {
    if config.objective == Objective::KappaPath && mu_excluded {
        format!(
            "no mu-eligible essential set: kappa {} with mu = {} excludes trees",
            config.kappa.describe(),
            config.mu
        )
    } else {
        format!("no point gives class {target} a strict majority")
    }
}

pub(crate) fn solve(
    forest: &Forest,
    instance: &ProblemInstance,
    table: &NodeProbabilityTable,
    config: &SolverConfig,
    allocations: &[EffortAllocation],
) -> Result<SolveReport> {
    let start = Instant::now();
    let geom = Geometry::new(forest, instance.epsilon);
    let m = majority_threshold(forest.trees().len());

    // Relaxed bound per allocation: best m per-tree maxima, geometry ignored.
    let mut mu_excluded = false;
    let mut queue: Vec<(usize, f64, Scores)> = allocations
        .iter()
        .enumerate()
        .filter_map(|(a, effort)| {
            let scores = Scores::compute(forest, table, effort, instance.target, config);
            mu_excluded |= scores.mu_excluded;
            let mut maxima: Vec<f64> = (0..forest.trees().len())
                .filter_map(|t| scores.tree_max(t))
                .map(f64::ln)
                .collect();
            if maxima.len() < m {
                return None;
            }
            maxima.sort_by(|a, b| b.total_cmp(a));
            let bound = maxima[..m].iter().sum();
            Some((a, bound, scores))
        })
        .collect();
    queue.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut search = Search {
        forest,
        geom: &geom,
        x0: &instance.x0,
        config,
        m,
        deadline: config.time_limit.map(|d| start + d),
        timed_out: false,
        nodes: 0,
        best: None,
        alloc: 0,
        scores: None,
        cands: Vec::new(),
        order: Vec::new(),
        bx: Vec::new(),
        chosen: Vec::new(),
    };
    for (a, bound, scores) in queue {
        if search.timed_out {
            break;
        }
        search.alloc = a;
        if !search.can_improve(bound) {
            continue;
        }
        search.run_allocation(a, scores);
    }

    let status = match (&search.best, search.timed_out) {
        (_, true) => Status::Timeout,
        (Some(_), false) => Status::Optimal,
        (None, false) => Status::Infeasible,
    };
    let solution = search.best.as_ref().map(|b| {
        build_solution(
            forest,
            &geom,
            instance,
            config,
            &allocations[b.alloc],
            &b.combo,
            &b.essential,
        )
    });
    let message = match status {
        Status::Infeasible => Some(infeasible_message(config, instance.target, mu_excluded)),
        Status::Timeout => Some(format!(
            "time limit reached; {}",
            if solution.is_some() {
                "returning incumbent"
            } else {
                "no incumbent"
            }
        )),
        Status::Optimal => None,
    };
    Ok(SolveReport {
        status,
        objective_kind: config.objective,
        message,
        nodes_explored: search.nodes,
        solution,
    })
}
