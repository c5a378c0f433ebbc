//! Simulated future perturbations of a cohort, measuring how many individuals
//! the forest moves into the desired class.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::prob::PerturbationSpec;
use crate::rng;

pub const DEFAULT_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualOutcome {
    pub id: u64,
    /// Replications that landed in the target class.
    pub hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortOutcome {
    pub reps: usize,
    pub individuals: Vec<IndividualOutcome>,
}

impl CohortOutcome {
    /// Mean percentage reclassified, averaged over replications and then
    /// individuals.
    pub fn percent(&self) -> f64 {
        let hits: usize = self.individuals.iter().map(|i| i.hits).sum();
        100.0 * hits as f64 / (self.reps * self.individuals.len()) as f64
    }
}

/// How a single replication moves one feature.
#[derive(Clone, Copy)]
enum Move {
    Drift,
    Effort,
    Extreme,
}

fn run(
    forest: &Forest,
    cohort: &[Individual],
    spec: &PerturbationSpec,
    target: u8,
    n_reps: usize,
    seed: u64,
    moves: &[Move],
) -> Result<CohortOutcome> {
    if cohort.is_empty() {
        return Err(Error::Simulation("empty cohort".into()));
    }
    if n_reps == 0 {
        return Err(Error::Simulation(
            "at least one replication is needed".into(),
        ));
    }
    spec.validate()?;
    if spec.features.len() != forest.num_features() {
        return Err(Error::Simulation(format!(
            "perturbation spec has {} features, forest has {}",
            spec.features.len(),
            forest.num_features()
        )));
    }
    for ind in cohort {
        forest.check_point(&ind.x)?;
        if forest.predict(&ind.x)?.class == target {
            return Err(Error::Simulation(format!(
                "individual {} is already in class {target}",
                ind.id
            )));
        }
    }
    let individuals = cohort
        .par_iter()
        .map(|ind| {
            let mut hits = 0;
            let mut x = ind.x.clone();
            for rep in 0..n_reps {
                let mut rng = rng::stream(&[seed, ind.id, rep as u64]);
                for (j, mv) in moves.iter().enumerate() {
                    x[j] = match mv {
                        Move::Drift => spec.perturb_value(j, ind.x[j], 0, &mut rng)?,
                        Move::Effort => spec.perturb_value(j, ind.x[j], 1, &mut rng)?,
                        Move::Extreme => spec.perturb_extreme(j, ind.x[j], &mut rng),
                    };
                }
                if forest.predict(&x)?.class == target {
                    hits += 1;
                }
            }
            Ok(IndividualOutcome { id: ind.id, hits })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CohortOutcome {
        reps: n_reps,
        individuals,
    })
}

/// Perturbs every feature of every individual `n_reps` times, with one unit
/// of effort on `effort_features` and none elsewhere, and counts how often
/// the forest predicts `target`.
pub fn simulate_cohort(
    forest: &Forest,
    cohort: &[Individual],
    effort_features: &[usize],
    spec: &PerturbationSpec,
    target: u8,
    n_reps: usize,
    seed: u64,
) -> Result<CohortOutcome> {
    let mut moves = vec![Move::Drift; forest.num_features()];
    for &j in effort_features {
        match spec.features.get(j) {
            Some(f) if f.effort_perturbable => moves[j] = Move::Effort,
            Some(_) => {
                return Err(Error::Simulation(format!(
                    "feature {j} does not accept effort"
                )))
            }
            None => return Err(Error::Simulation(format!("feature {j} out of range"))),
        }
    }
    run(forest, cohort, spec, target, n_reps, seed, &moves)
}

/// Upper bound on reclassification: every effort feature takes its most
/// favourable move at once.
pub fn feasible_baseline(
    forest: &Forest,
    cohort: &[Individual],
    spec: &PerturbationSpec,
    target: u8,
    n_reps: usize,
    seed: u64,
) -> Result<CohortOutcome> {
    run(
        forest,
        cohort,
        spec,
        target,
        n_reps,
        seed,
        &vec![Move::Extreme; forest.num_features()],
    )
}

/// `raw / baseline · 100`, or `None` when the baseline is zero.
pub fn normalized_percent(raw: f64, baseline: f64) -> Option<f64> {
    (baseline > 0.0).then(|| raw / baseline * 100.0)
}

/// One method at one eta. Methods with several rankings (random
/// selection) report the mean over them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub method: String,
    pub eta: usize,
    pub percent: f64,
    /// Effort features of each ranking.
    pub features: Vec<Vec<usize>>,
    pub outcomes: Vec<CohortOutcome>,
}

impl SimCell {
    pub fn new(
        method: impl Into<String>,
        eta: usize,
        runs: Vec<(Vec<usize>, CohortOutcome)>,
    ) -> Self {
        let percent = runs.iter().map(|(_, o)| o.percent()).sum::<f64>() / runs.len() as f64;
        let (features, outcomes) = runs.into_iter().unzip();
        Self {
            method: method.into(),
            eta,
            percent,
            features,
            outcomes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub seed: u64,
    pub reps: usize,
    pub cohort: usize,
    pub cells: Vec<SimCell>,
    pub baseline: Option<CohortOutcome>,
    pub baseline_percent: Option<f64>,
    pub warnings: Vec<String>,
}

impl SimReport {
    pub fn build(cells: Vec<SimCell>, baseline: Option<CohortOutcome>, seed: u64) -> Self {
        let any = cells
            .iter()
            .flat_map(|c| c.outcomes.first())
            .next()
            .or(baseline.as_ref());
        let reps = any.map_or(0, |o| o.reps);
        let cohort = any.map_or(0, |o| o.individuals.len());
        let baseline_percent = baseline.as_ref().map(CohortOutcome::percent);
        let mut warnings = Vec::new();
        if baseline_percent == Some(0.0) {
            warnings.push("baseline reclassifies nobody; normalized table omitted".to_string());
        }
        Self {
            seed,
            reps,
            cohort,
            cells,
            baseline,
            baseline_percent,
            warnings,
        }
    }

    /// Methods in first-appearance order.
    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for c in &self.cells {
            if !out.contains(&c.method.as_str()) {
                out.push(&c.method);
            }
        }
        out
    }

    /// Values of eta present, largest first.
    pub fn etas(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.cells.iter().map(|c| c.eta).collect();
        set.into_iter().rev().collect()
    }

    fn cell(&self, method: &str, eta: usize) -> Option<&SimCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.eta == eta)
    }

    fn table(&self, value: impl Fn(f64) -> f64) -> String {
        let etas = self.etas();
        let methods = self.methods();
        let best: Vec<f64> = etas
            .iter()
            .map(|&e| {
                self.cells
                    .iter()
                    .filter(|c| c.eta == e)
                    .map(|c| value(c.percent))
                    .fold(f64::MIN, f64::max)
            })
            .collect();
        let mut s = String::from("method");
        for e in &etas {
            let _ = write!(s, ",eta={e}");
        }
        s.push_str(",best\n");
        for m in methods {
            s.push_str(m);
            let mut marks = Vec::new();
            for (k, &e) in etas.iter().enumerate() {
                match self.cell(m, e) {
                    Some(c) => {
                        let v = value(c.percent);
                        let _ = write!(s, ",{v:.2}");
                        if (v - best[k]).abs() < 5e-3 {
                            marks.push(e.to_string());
                        }
                    }
                    None => s.push(','),
                }
            }
            let _ = writeln!(s, ",{}", marks.join(";"));
        }
        s
    }

    /// Mean percentage reclassified, one row per method, eta descending.
    /// The `best` column lists the eta columns where the row is maximal.
    pub fn raw_csv(&self) -> String {
        self.table(|v| v)
    }

    /// Raw percentages relative to the baseline; `None` without a positive
    /// baseline.
    pub fn normalized_csv(&self) -> Option<String> {
        let b = self.baseline_percent.filter(|&b| b > 0.0)?;
        Some(self.table(|v| normalized_percent(v, b).expect("positive baseline")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from_json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{Direction, FeatureMeta, LeafDoc, NodeDoc, Tree};
    use crate::prob::FeatureStats;
    use proptest::prelude::*;

    fn stump(feature: usize, threshold: f64) -> Tree {
        Tree::new(
            0,
            vec![NodeDoc {
                id: 0,
                feature,
                threshold,
                left: 1,
                right: 2,
            }],
            vec![LeafDoc { id: 1, class: 0 }, LeafDoc { id: 2, class: 1 }],
            1.0,
        )
        .unwrap()
    }

    fn features() -> Vec<FeatureMeta> {
        vec![
            FeatureMeta::continuous(0, "age", Direction::None),
            FeatureMeta::continuous(1, "a", Direction::Increase),
            FeatureMeta::binary(2, "b", Direction::ToOne),
        ]
    }

    fn spec(feats: &[FeatureMeta]) -> PerturbationSpec {
        let stats = FeatureStats {
            sigma: vec![0.2, 0.2, 0.5],
            majority_freq: vec![1.0, 1.0, 0.8],
        };
        PerturbationSpec::from_stats(feats, &stats, 3).unwrap()
    }

    fn cohort(n: usize) -> Vec<Individual> {
        (0..n)
            .map(|i| Individual {
                id: i as u64,
                x: vec![0.1 + 0.01 * i as f64, 0.3 + 0.01 * i as f64, 0.0],
            })
            .collect()
    }

    #[test]
    fn frozen_features_never_reclassify() {
        let feats = features();
        let forest = Forest::new(feats.clone(), vec![stump(0, 0.5)]).unwrap();
        let sp = spec(&feats).freeze_immutables(&feats);
        let c = cohort(10);
        assert_eq!(
            simulate_cohort(&forest, &c, &[1, 2], &sp, 1, 20, 1)
                .unwrap()
                .percent(),
            0.0
        );
        assert_eq!(
            feasible_baseline(&forest, &c, &sp, 1, 20, 1)
                .unwrap()
                .percent(),
            0.0
        );
    }

    #[test]
    fn baseline_crosses_a_near_threshold() {
        // 0.5 - 0.3 < 1.5 * 0.2
        let feats = features();
        let forest = Forest::new(feats.clone(), vec![stump(1, 0.5)]).unwrap();
        let sp = spec(&feats);
        let c = vec![Individual {
            id: 0,
            x: vec![0.5, 0.3, 0.0],
        }];
        assert_eq!(
            feasible_baseline(&forest, &c, &sp, 1, 10, 9)
                .unwrap()
                .percent(),
            100.0
        );
    }

    #[test]
    fn deterministic_and_order_invariant() {
        let feats = features();
        let forest = Forest::new(feats.clone(), vec![stump(1, 0.45)]).unwrap();
        let sp = spec(&feats);
        let c = cohort(12);
        let a = simulate_cohort(&forest, &c, &[1], &sp, 1, 1, 4).unwrap();
        assert_eq!(a, simulate_cohort(&forest, &c, &[1], &sp, 1, 1, 4).unwrap());
        let mut rev = c.clone();
        rev.reverse();
        let b = simulate_cohort(&forest, &rev, &[1], &sp, 1, 1, 4).unwrap();
        assert_eq!(a.percent(), b.percent());
    }

    #[test]
    fn effort_helps_on_a_monotone_rule() {
        let feats = features();
        let forest = Forest::new(feats.clone(), vec![stump(1, 0.45)]).unwrap();
        let sp = spec(&feats);
        let c = cohort(12);
        let none = simulate_cohort(&forest, &c, &[], &sp, 1, 100, 4)
            .unwrap()
            .percent();
        let all = simulate_cohort(&forest, &c, &[1, 2], &sp, 1, 100, 4)
            .unwrap()
            .percent();
        assert!(all > none, "{all} vs {none}");
    }

    #[test]
    fn contract_errors() {
        let feats = features();
        let forest = Forest::new(feats.clone(), vec![stump(1, 0.45)]).unwrap();
        let sp = spec(&feats);
        assert!(simulate_cohort(&forest, &[], &[], &sp, 1, 10, 0).is_err());
        assert!(simulate_cohort(&forest, &cohort(2), &[0], &sp, 1, 10, 0).is_err());
        let on_target = vec![Individual {
            id: 0,
            x: vec![0.0, 0.9, 0.0],
        }];
        assert!(simulate_cohort(&forest, &on_target, &[], &sp, 1, 10, 0).is_err());
    }

    fn outcome(hits: &[usize], reps: usize) -> CohortOutcome {
        CohortOutcome {
            reps,
            individuals: hits
                .iter()
                .enumerate()
                .map(|(i, &h)| IndividualOutcome {
                    id: i as u64,
                    hits: h,
                })
                .collect(),
        }
    }

    fn cell(method: &str, eta: usize, hits: &[usize]) -> SimCell {
        SimCell::new(method, eta, vec![(vec![], outcome(hits, 10))])
    }

    #[test]
    fn normalization_arithmetic() {
        assert!((normalized_percent(31.81, 34.53).unwrap() - 92.12).abs() < 0.05);
        assert_eq!(normalized_percent(0.0, 34.53), Some(0.0));
        assert_eq!(normalized_percent(10.0, 0.0), None);
    }

    #[test]
    fn report_tables() {
        let rsr = SimCell::new(
            "RSR",
            1,
            vec![
                (vec![1], outcome(&[2, 2], 10)),
                (vec![2], outcome(&[4, 0], 10)),
                (vec![1], outcome(&[0, 4], 10)),
            ],
        );
        assert_eq!(rsr.percent, 20.0);
        let cells = vec![
            cell("max", 1, &[5, 5]),
            cell("max", 2, &[10, 5]),
            rsr,
            cell("RSR", 2, &[10, 10]),
        ];
        let r = SimReport::build(cells.clone(), Some(outcome(&[10, 10], 10)), 7);
        assert_eq!(
            r.raw_csv(),
            "method,eta=2,eta=1,best\nmax,75.00,50.00,1\nRSR,100.00,20.00,2\n"
        );
        assert_eq!(r.normalized_csv().unwrap(), r.raw_csv());
        assert_eq!(SimReport::from_json(&r.to_json()).unwrap(), r);

        let zero = SimReport::build(cells, Some(outcome(&[0, 0], 10)), 7);
        assert!(zero.normalized_csv().is_none());
        assert_eq!(zero.warnings.len(), 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn percent_is_bounded_and_order_free(seed in any::<u64>(), rot in 0usize..12, effort in proptest::collection::vec(1usize..3, 0..3)) {
            let feats = features();
            let forest = Forest::new(feats.clone(), vec![stump(1, 0.45), stump(2, 0.5), stump(0, 0.6)]).unwrap();
            let sp = spec(&feats);
            let c = cohort(12);
            let mut shuffled = c.clone();
            shuffled.rotate_left(rot);
            let a = simulate_cohort(&forest, &c, &effort, &sp, 1, 5, seed).unwrap().percent();
            let b = simulate_cohort(&forest, &shuffled, &effort, &sp, 1, 5, seed).unwrap().percent();
            prop_assert_eq!(a, b);
            prop_assert!((0.0..=100.0).contains(&a));
        }
    }
}
