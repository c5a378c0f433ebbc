//! Exit criteria. Runs every check, prints one line each, and fails if any
//! check fails.

mod oracle;

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use probshift::data::{split, synth_generate, SynthConfig};
use probshift::forest::{
    firefighter_forest, firefighter_table, Direction, FeatureKind, FeatureMeta, Forest, LeafDoc,
    NodeDoc, Tree,
};
use probshift::pipeline::{off_target, solve_cohort};
use probshift::prob::{
    estimate_node_probabilities, FeatureStats, NodeProbabilityTable, PerturbationSpec,
};
use probshift::ranking::{effort_ranking, rsr_rankings};
use probshift::sim::{
    normalized_percent, simulate_cohort, CohortOutcome, IndividualOutcome, SimCell, SimReport,
};
use probshift::solver::{
    brute_force_oracle, path_probability, solve, solve_fixed_effort, solve_kappa_path,
    solve_max_path, solve_min_distance, solve_min_path, verify_solution, EffortAllocation, Kappa,
    Norm, Objective, ProblemInstance, SolveReport, SolverConfig, Status, DEFAULT_ORACLE_CAP,
};
use probshift::train::{accuracy, train, TrainConfig};

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

// ---------------------------------------------------------------- instances

struct Case {
    seed: u64,
    forest: Forest,
    table: NodeProbabilityTable,
    instance: ProblemInstance,
    kappa: Kappa,
    mu: f64,
    positive_only: bool,
    strict_mu: bool,
    norm: Norm,
}

impl Case {
    fn config(&self, objective: Objective) -> SolverConfig {
        let mut cfg = SolverConfig::new(objective).kappa(self.kappa, self.mu);
        cfg.positive_leaves_only = self.positive_only;
        cfg.strict_mu = self.strict_mu;
        cfg.norm = self.norm;
        cfg
    }
}

struct TreeGen<'a> {
    rng: &'a mut ChaCha8Rng,
    features: &'a [FeatureMeta],
    max_depth: usize,
    nodes: Vec<NodeDoc>,
    leaves: Vec<LeafDoc>,
    next: usize,
}

impl TreeGen<'_> {
    fn grow(&mut self, depth: usize) -> usize {
        let id = self.next;
        self.next += 1;
        if depth < self.max_depth && (depth == 0 || self.rng.random_bool(0.75)) {
            let feature = self.rng.random_range(0..self.features.len());
            let threshold = match self.features[feature].kind {
                FeatureKind::Binary => 0.5,
                FeatureKind::Continuous => self.rng.random_range(1..10) as f64 / 10.0,
            };
            let left = self.grow(depth + 1);
            let right = self.grow(depth + 1);
            self.nodes.push(NodeDoc {
                id,
                feature,
                threshold,
                left,
                right,
            });
        } else {
            let class = self.rng.random_range(0..2);
            self.leaves.push(LeafDoc { id, class });
        }
        id
    }
}

const TABLE_LEVELS: usize = 2;

fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.random_range(2..=5);
    let features: Vec<FeatureMeta> = (0..d)
        .map(|j| {
            let binary = rng.random_bool(0.3);
            let dir = if rng.random_bool(0.25) {
                Direction::None
            } else {
                match (binary, rng.random_bool(0.5)) {
                    (true, true) => Direction::ToOne,
                    (true, false) => Direction::ToZero,
                    (false, true) => Direction::Increase,
                    (false, false) => Direction::Decrease,
                }
            };
            if binary {
                FeatureMeta::binary(j, format!("f{j}"), dir)
            } else {
                FeatureMeta::continuous(j, format!("f{j}"), dir)
            }
        })
        .collect();
    let num_trees = rng.random_range(1..=5);
    let max_depth = rng.random_range(1..=3);
    let trees: Vec<Tree> = (0..num_trees)
        .map(|_| {
            let mut g = TreeGen {
                rng: &mut rng,
                features: &features,
                max_depth,
                nodes: Vec::new(),
                leaves: Vec::new(),
                next: 0,
            };
            g.grow(0);
            Tree::new(0, g.nodes, g.leaves, 1.0).unwrap()
        })
        .collect();
    let forest = Forest::new(features.clone(), trees).unwrap();
    let rows = forest
        .trees()
        .iter()
        .map(|t| {
            (0..t.nodes().len())
                .map(|_| {
                    (0..=TABLE_LEVELS)
                        .map(|_| match rng.random_range(0..10) {
                            0 => 0.0,
                            1 => 1.0,
                            _ => rng.random::<f64>(),
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    let table = NodeProbabilityTable::new(seed, TABLE_LEVELS, rows).unwrap();
    let x0 = features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Binary => f64::from(rng.random_range(0..2u8)),
            FeatureKind::Continuous => rng.random_range(0..=20) as f64 / 20.0,
        })
        .collect();
    let instance = ProblemInstance::new(
        x0,
        rng.random_range(0..2),
        rng.random_range(0..=3),
        rng.random_range(1..=2),
    );
    let max_leaves = forest
        .trees()
        .iter()
        .map(|t| t.leaves().len())
        .max()
        .unwrap();
    Case {
        seed,
        kappa: Kappa::Rank(rng.random_range(1..=max_leaves)),
        mu: [0.0, 1e-6, 0.05, 0.3][rng.random_range(0..4)],
        positive_only: rng.random_bool(0.3),
        strict_mu: rng.random_bool(0.2),
        norm: [Norm::L1, Norm::L2, Norm::Linf][rng.random_range(0..3)],
        forest,
        table,
        instance,
    }
}

fn suite() -> Vec<Case> {
    (0..100).map(|s| random_case(1000 + s)).collect()
}

fn run(
    case: &Case,
    objective: Objective,
    cfg: &SolverConfig,
    instance: &ProblemInstance,
) -> SolveReport {
    let f = &case.forest;
    let t = &case.table;
    match objective {
        Objective::MaxPath => solve_max_path(f, instance, t, cfg),
        Objective::MinPath => solve_min_path(f, instance, t, cfg),
        Objective::KappaPath => solve_kappa_path(f, instance, t, cfg),
        Objective::MinDistance => solve_min_distance(f, instance, cfg),
    }
    .unwrap()
}

const OBJECTIVES: [Objective; 4] = [
    Objective::MaxPath,
    Objective::MinPath,
    Objective::KappaPath,
    Objective::MinDistance,
];

// ---------------------------------------------------------------- criteria

fn worked_example() -> Check {
    let forest = firefighter_forest();
    let table = firefighter_table();
    let instance = ProblemInstance::new(table.x0().unwrap().to_vec(), 1, 1, 1);
    let on_s = EffortAllocation(vec![1, 0]);
    let start = Instant::now();
    let max_cfg = SolverConfig::new(Objective::MaxPath);
    let min_cfg = SolverConfig::new(Objective::MinPath);
    let max = solve_max_path(&forest, &instance, &table, &max_cfg).unwrap();
    let max_s = solve_fixed_effort(&forest, &instance, &table, &max_cfg, &on_s).unwrap();
    let min = solve_min_path(&forest, &instance, &table, &min_cfg).unwrap();
    let min_s = solve_fixed_effort(&forest, &instance, &table, &min_cfg, &on_s).unwrap();
    let elapsed = start.elapsed();
    let effort = |r: &SolveReport| r.solution.as_ref().map(|s| s.effort.units().to_vec());
    let got = [
        max.objective(),
        max_s.objective(),
        min.objective(),
        min_s.objective(),
    ];
    let want = [0.36, 0.20, 0.32, 0.15];
    let values_ok = got
        .iter()
        .zip(want)
        .all(|(g, w)| g.is_some_and(|g| (g - w).abs() <= 1e-9));
    let effort_ok = effort(&max) == Some(vec![0, 1]) && effort(&min) == Some(vec![0, 1]);
    let fast = elapsed < Duration::from_millis(10);
    check(
        "worked example goldens",
        values_ok && effort_ok && fast,
        format!("values {got:?}, best effort on A: {effort_ok}, {elapsed:?} (limit 10ms)"),
    )
}

fn oracle_equivalence(cases: &[Case]) -> Check {
    let start = Instant::now();
    let mut compared = 0;
    let mut failures = Vec::new();
    for case in cases {
        for objective in OBJECTIVES {
            let cfg = case.config(objective);
            let report = run(case, objective, &cfg, &case.instance);
            let table = objective.is_probabilistic().then_some(&case.table);
            let reference = brute_force_oracle(
                &case.forest,
                &case.instance,
                table,
                &cfg,
                DEFAULT_ORACLE_CAP,
            )
            .unwrap();
            let enumerated = oracle::best_objective(&case.forest, &case.instance, table, &cfg);
            compared += 1;
            let agree = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => close(a, b, 1e-9),
                (None, None) => true,
                _ => false,
            };
            if report.status == Status::Timeout
                || !agree(report.objective(), reference.objective())
                || !agree(report.objective(), enumerated)
            {
                failures.push(format!(
                    "case {} {objective:?}: solver {:?}, oracle {:?}, enumeration {enumerated:?}",
                    case.seed,
                    report.objective(),
                    reference.objective()
                ));
            }
            if let Some(s) = &report.solution {
                let v = verify_solution(&case.forest, &case.instance, table, &cfg, s);
                if !v.passed {
                    failures.push(format!(
                        "case {} {objective:?}: verification {:?}",
                        case.seed, v.failures
                    ));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let fast = elapsed < Duration::from_secs(60);
    check(
        "solvers agree with exhaustive enumeration",
        failures.is_empty() && fast,
        format!(
            "{compared} solves, {} disagreements, {elapsed:.1?} (limit 60s){}",
            failures.len(),
            failures
                .first()
                .map(|f| format!("; first: {f}"))
                .unwrap_or_default()
        ),
    )
}

fn kappa_one_is_min_path(cases: &[Case]) -> Check {
    let mut mismatches = Vec::new();
    for case in cases {
        let min = run(
            case,
            Objective::MinPath,
            &SolverConfig::new(Objective::MinPath),
            &case.instance,
        );
        let cfg = SolverConfig::new(Objective::KappaPath).kappa(Kappa::Rank(1), 0.0);
        let kappa = run(case, Objective::KappaPath, &cfg, &case.instance);
        if min.status != kappa.status || min.objective() != kappa.objective() {
            mismatches.push(case.seed);
        }
    }
    check(
        "kappa 1 coincides with the worst-path objective",
        mismatches.is_empty(),
        format!("{} instances, mismatches {mismatches:?}", cases.len()),
    )
}

/// Infeasible ranks below every feasible value.
fn value(r: &SolveReport) -> f64 {
    r.objective().unwrap_or(f64::NEG_INFINITY)
}

fn ordering_and_monotonicity(cases: &[Case]) -> Check {
    let tol = 1e-12;
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    let mut upper_kappa_one = Vec::new();
    let mut budget = Vec::new();
    for case in cases {
        let kappa_cfg = || {
            let mut c = case.config(Objective::KappaPath);
            c.mu = 0.0;
            c
        };
        let min = value(&run(
            case,
            Objective::MinPath,
            &SolverConfig::new(Objective::MinPath),
            &case.instance,
        ));
        let max = value(&run(
            case,
            Objective::MaxPath,
            &SolverConfig::new(Objective::MaxPath),
            &case.instance,
        ));
        let kap = value(&run(
            case,
            Objective::KappaPath,
            &kappa_cfg(),
            &case.instance,
        ));
        let kap1 = value(&run(
            case,
            Objective::KappaPath,
            &SolverConfig::new(Objective::KappaPath).kappa(Kappa::Rank(1), 0.0),
            &case.instance,
        ));
        if min > kap + tol {
            lower.push(case.seed);
        }
        if kap > max + tol {
            upper.push(format!(
                "{}: kappa {:?} gives {kap:.4} > {max:.4}",
                case.seed, case.kappa
            ));
        }
        if kap1 > max + tol {
            upper_kappa_one.push(case.seed);
        }
        for (objective, cfg) in [
            (Objective::MaxPath, SolverConfig::new(Objective::MaxPath)),
            (Objective::MinPath, SolverConfig::new(Objective::MinPath)),
            (Objective::KappaPath, kappa_cfg()),
        ] {
            let by_eta: Vec<f64> = (0..=3)
                .map(|eta| {
                    let mut inst = case.instance.clone();
                    inst.eta = eta;
                    value(&run(case, objective, &cfg, &inst))
                })
                .collect();
            let by_cap: Vec<f64> = (0..=2)
                .map(|cap| {
                    let mut inst = case.instance.clone();
                    inst.max_effort = cap;
                    value(&run(case, objective, &cfg, &inst))
                })
                .collect();
            if by_eta
                .windows(2)
                .chain(by_cap.windows(2))
                .any(|w| w[0] > w[1] + tol)
            {
                budget.push(format!("{} {objective:?}", case.seed));
            }
        }
    }
    let passed = lower.is_empty() && upper.is_empty() && budget.is_empty();
    check(
        "objective ordering and budget monotonicity",
        passed,
        format!(
            "min <= kappa violated {}x; kappa <= max violated {}x (kappa 1: {}x){}; budget monotonicity violated {}x",
            lower.len(),
            upper.len(),
            upper_kappa_one.len(),
            upper.first().map(|u| format!(", e.g. case {u}")).unwrap_or_default(),
            budget.len()
        ),
    )
}

fn probabilities_sum_to_one(cases: &[Case]) -> Check {
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for case in cases {
        let mutable = case.forest.mutable_mask();
        for effort in oracle::allocations(&mutable, case.instance.max_effort, case.instance.eta) {
            let alloc = EffortAllocation(effort.clone());
            for (t, tree) in case.forest.trees().iter().enumerate() {
                let lib: f64 = (0..tree.leaves().len())
                    .map(|l| path_probability(tree, t, l, &case.table, &alloc))
                    .sum();
                let direct: f64 = oracle::leaf_paths(&case.forest, t)
                    .iter()
                    .map(|p| oracle::path_prob(&case.table, t, p, &effort))
                    .sum();
                worst = worst.max((lib - 1.0).abs()).max((direct - 1.0).abs());
                checked += 1;
            }
        }
    }
    check(
        "path probabilities sum to one",
        worst <= 1e-9,
        format!("{checked} (tree, allocation) pairs, max deviation {worst:.2e}"),
    )
}

fn monte_carlo_estimates() -> Check {
    let sigma = 0.2;
    let x0 = 0.5;
    let feature = FeatureMeta::continuous(0, "x", Direction::Increase);
    let stump = |threshold: f64| {
        Tree::new(
            0,
            vec![NodeDoc {
                id: 0,
                feature: 0,
                threshold,
                left: 1,
                right: 2,
            }],
            vec![LeafDoc { id: 1, class: 0 }, LeafDoc { id: 2, class: 1 }],
            1.0,
        )
        .unwrap()
    };
    // symmetric drift across x0; beyond the drift range; one third of the effort range
    let cases = [
        (x0, 0, 0.5),
        (x0 + sigma + 0.01, 0, 0.0),
        (x0 + sigma, 1, 1.0 / 3.0),
    ];
    let forest = Forest::new(
        vec![feature.clone()],
        cases.iter().map(|c| stump(c.0)).collect(),
    )
    .unwrap();
    let stats = FeatureStats {
        sigma: vec![sigma],
        majority_freq: vec![1.0],
    };
    let n = 1000;
    let mut within = [0usize; 3];
    for seed in 0..100 {
        let spec = PerturbationSpec::from_stats(std::slice::from_ref(&feature), &stats, seed)
            .unwrap()
            .with_samples(n);
        let table = estimate_node_probabilities(&forest, &[x0], &spec, 1, 0).unwrap();
        for (k, &(_, level, p)) in cases.iter().enumerate() {
            let est = table.right_prob(k, 0, level);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            if (est - p).abs() <= 3.0 * se {
                within[k] += 1;
            }
        }
    }
    check(
        "Monte-Carlo branch estimates",
        within.iter().all(|&w| w >= 99),
        format!("seeds within 3 SE out of 100: {within:?} (need 99 each)"),
    )
}

fn report_arithmetic() -> Check {
    let outcome = |hits: usize| CohortOutcome {
        reps: 100,
        individuals: (0..100)
            .map(|i| IndividualOutcome {
                id: i,
                hits: usize::from(i < hits as u64) * 100,
            })
            .collect(),
    };
    let scaled = |total: usize| CohortOutcome {
        reps: 100,
        individuals: (0..100u64)
            .map(|i| {
                let base = total / 100;
                IndividualOutcome {
                    id: i,
                    hits: base + usize::from((i as usize) < total % 100),
                }
            })
            .collect(),
    };
    let direct = normalized_percent(31.81, 34.53).unwrap();
    let report = SimReport::build(
        vec![SimCell::new("kappa-50", 4, vec![(vec![], scaled(3181))])],
        Some(scaled(3453)),
        0,
    );
    let table = report.normalized_csv().unwrap_or_default();
    let from_table: f64 = table
        .lines()
        .nth(1)
        .and_then(|l| l.split(',').nth(1))
        .and_then(|v| v.parse().ok())
        .unwrap_or(f64::NAN);
    let zero = SimReport::build(
        vec![SimCell::new("m", 1, vec![(vec![], outcome(0))])],
        Some(outcome(10)),
        0,
    );
    let zero_ok = zero.normalized_csv().is_some_and(|t| t.contains(",0.00,"));
    check(
        "normalized report arithmetic",
        (direct - 92.12).abs() <= 0.05 && (from_table - 92.12).abs() <= 0.05 && zero_ok,
        format!("31.81 / 34.53 -> {direct:.4}, report cell {from_table}"),
    )
}

fn end_to_end() -> Check {
    let start = Instant::now();
    let mut path_mean = [0.0; 2];
    let mut rsr_mean = [0.0; 2];
    let mut accuracies = Vec::new();
    let seeds = 5;
    for seed in 0..seeds {
        let data = synth_generate(SynthConfig::new(600, 8, seed)).unwrap();
        let (train_part, test_part) = split(&data, 2.0 / 3.0, seed).unwrap();
        let forest = train(&train_part, &TrainConfig::new(9, 4, seed)).unwrap();
        accuracies.push(accuracy(&forest, &train_part).unwrap());
        let spec = PerturbationSpec::from_stats(&data.features, &train_part.feature_stats(), seed)
            .unwrap()
            .with_samples(1000);
        let solve_set = off_target(&forest, &train_part, 1).unwrap();
        let eval_set = off_target(&forest, &test_part, 1).unwrap();
        for (k, eta) in [1usize, 2].into_iter().enumerate() {
            let cfg = SolverConfig::new(Objective::KappaPath).kappa(Kappa::Fraction(0.5), 1e-6);
            let reports = solve_cohort(&forest, &solve_set, &spec, 1, eta, 1, &cfg).unwrap();
            let ranking = effort_ranking("kappa-50", &reports, &data.features, eta, false).unwrap();
            path_mean[k] +=
                simulate_cohort(&forest, &eval_set, &ranking.top(eta), &spec, 1, 100, seed)
                    .unwrap()
                    .percent()
                    / seeds as f64;
            let random = rsr_rankings(&data.features, eta, seed, 3).unwrap();
            let mean: f64 = random
                .iter()
                .map(|r| {
                    simulate_cohort(&forest, &eval_set, &r.top(eta), &spec, 1, 100, seed)
                        .unwrap()
                        .percent()
                })
                .sum::<f64>()
                / random.len() as f64;
            rsr_mean[k] += mean / seeds as f64;
        }
    }
    let elapsed = start.elapsed();
    let acc_ok = accuracies.iter().all(|&a| a >= 0.9);
    let better = path_mean.iter().zip(&rsr_mean).all(|(p, r)| p >= r);
    let fast = elapsed < Duration::from_secs(15 * 60);
    check(
        "end-to-end ranking beats random selection",
        acc_ok && better && fast,
        format!(
            "train accuracy min {:.3}; reclassified % eta 1: {:.2} vs {:.2}, eta 2: {:.2} vs {:.2}; {elapsed:.1?}",
            accuracies.iter().copied().fold(1.0, f64::min),
            path_mean[0],
            rsr_mean[0],
            path_mean[1],
            rsr_mean[1]
        ),
    )
}

fn scale() -> Check {
    let data = synth_generate(SynthConfig::new(1000, 14, 7)).unwrap();
    let forest = train(&data, &TrainConfig::new(25, 5, 7)).unwrap();
    let spec = PerturbationSpec::from_stats(&data.features, &data.feature_stats(), 7).unwrap();
    let limit = Duration::from_secs(300);
    let start = Instant::now();
    let mut outcomes = Vec::new();
    let mut ok = true;
    for ind in off_target(&forest, &data, 1).unwrap().iter().take(3) {
        let table = estimate_node_probabilities(&forest, &ind.x, &spec, 1, ind.id).unwrap();
        let instance = ProblemInstance::new(ind.x.clone(), 1, 4, 1);
        for objective in [Objective::MaxPath, Objective::MinPath, Objective::KappaPath] {
            let mut cfg = SolverConfig::new(objective).kappa(Kappa::Fraction(0.5), 1e-6);
            cfg.time_limit = Some(limit);
            let t = Instant::now();
            let r = solve(&forest, &instance, Some(&table), &cfg).unwrap();
            let verified = r
                .solution
                .as_ref()
                .is_some_and(|s| verify_solution(&forest, &instance, Some(&table), &cfg, s).passed);
            ok &= verified
                && t.elapsed() <= limit
                && matches!(r.status, Status::Optimal | Status::Timeout);
            outcomes.push(format!("{:?}", r.status));
        }
    }
    let elapsed = start.elapsed();
    check(
        "25-tree depth-5 solves within the time limit",
        ok && outcomes.len() == 9,
        format!(
            "{} solves ({}), all verified: {ok}, {elapsed:.1?}",
            outcomes.len(),
            outcomes.join(" ")
        ),
    )
}

fn main() {
    let cases = suite();
    let checks = [
        worked_example(),
        oracle_equivalence(&cases),
        kappa_one_is_min_path(&cases),
        ordering_and_monotonicity(&cases),
        probabilities_sum_to_one(&cases),
        monte_carlo_estimates(),
        report_arithmetic(),
        end_to_end(),
        scale(),
    ];
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        checks.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
