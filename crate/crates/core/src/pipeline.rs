//! Glue between stages: cohort selection and batch solving.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::Result;
use crate::forest::Forest;
use crate::prob::{estimate_node_probabilities, PerturbationSpec};
use crate::sim::Individual;
use crate::solver::{solve, ProblemInstance, SolveReport, SolverConfig};

/// Rows the forest currently assigns to a class other than `target`.
pub fn off_target(forest: &Forest, data: &Dataset, target: u8) -> Result<Vec<Individual>> {
    let mut out = Vec::new();
    for (row, &id) in data.rows.iter().zip(&data.ids) {
        if forest.predict(row)?.class != target {
            out.push(Individual { id, x: row.clone() });
        }
    }
    Ok(out)
}

/// Estimates each individual's probability table and solves one instance
/// per individual. Reports come back in cohort order.
pub fn solve_cohort(
    forest: &Forest,
    cohort: &[Individual],
    spec: &PerturbationSpec,
    target: u8,
    eta: usize,
    max_effort: usize,
    config: &SolverConfig,
) -> Result<Vec<SolveReport>> {
    cohort
        .par_iter()
        .map(|ind| {
            let instance = ProblemInstance::new(ind.x.clone(), target, eta, max_effort);
            if config.objective.is_probabilistic() {
                let table = estimate_node_probabilities(forest, &ind.x, spec, max_effort, ind.id)?;
                solve(forest, &instance, Some(&table), config)
            } else {
                solve(forest, &instance, None, config)
            }
        })
        .collect()
}
