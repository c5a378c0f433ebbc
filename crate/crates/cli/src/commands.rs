use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use probshift::data::{
    load_csv, split, synth_generate, synth_schema, Dataset, DatasetSchema, SynthConfig,
};
use probshift::forest::{firefighter_forest, firefighter_table, Forest};
use probshift::pipeline::off_target;
use probshift::prob::{estimate_node_probabilities, NodeProbabilityTable, PerturbationSpec};
use probshift::ranking::{
    effort_ranking, importances_from_csv, importances_to_csv, rfr_ranking, rsr_ranking,
    rsr_rankings, Ranking,
};
use probshift::sim::{feasible_baseline, simulate_cohort, Individual, SimCell, SimReport};
use probshift::solver::{
    solve, solve_fixed_effort, solve_max_path, solve_min_path, verify_solution, EffortAllocation,
    Kappa, MuDirection, Norm, Objective, ProblemInstance, SolveReport, SolverConfig, Status,
    Verdict,
};
use probshift::train::{accuracy, impurity_importances, train, TrainConfig};
use probshift::{Error, Result};

use crate::manifest::{digest_all, RunManifest, MANIFEST_NAME};
use crate::{
    Command, DataArgs, Demo, MuDirectionArg, NormArg, ObjectiveArg, Outcome, Part, ProbsArgs,
    RankArgs, ReplayArgs, ShiftArgs, SimulateArgs, SynthArgs, TrainArgs, EXIT_ERROR,
    EXIT_INFEASIBLE, EXIT_OK, EXIT_TIMEOUT,
};

/// What `shift` writes per individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftOutput {
    pub individual: Option<u64>,
    pub report: SolveReport,
    pub verdict: Option<Verdict>,
}

pub(crate) fn execute(command: Command) -> Result<Outcome> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Probs(a) => probs(a),
        Command::Shift(a) => shift(a),
        Command::Rank(a) => rank(a),
        Command::Simulate(a) => simulate(a),
        Command::Demo {
            which: Demo::Firefighter,
        } => demo_firefighter(),
        Command::Replay(a) => replay(a),
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.into(),
        source: e,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io(path))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    fs::write(path, contents).map_err(io(path))
}

/// `path` with `suffix` appended to its stem, e.g. `r.csv` → `r.normalized.csv`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Refuses to write over an input.
fn guard(inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    for o in outputs {
        let Ok(o) = o.canonicalize() else { continue };
        for i in inputs {
            if i.canonicalize()
                .is_ok_and(|i| i == o || o.starts_with(&i) && i.is_dir())
            {
                return Err(Error::Input(format!(
                    "output {} would overwrite input {}",
                    o.display(),
                    i.display()
                )));
            }
        }
    }
    Ok(())
}

fn load_forest(path: &Path) -> Result<Forest> {
    Forest::from_json(&read(path)?)
}

struct Loaded {
    full: Dataset,
    train: Dataset,
    test: Dataset,
}

impl Loaded {
    fn part(&self, part: Part) -> &Dataset {
        match part {
            Part::Train => &self.train,
            Part::Test => &self.test,
            Part::All => &self.full,
        }
    }
}

fn load_data(args: &DataArgs) -> Result<Loaded> {
    let schema = DatasetSchema::from_json(&read(&args.schema)?)?;
    let full = load_csv(&args.data, &schema)?;
    let (train, test) = split(&full, args.train_fraction, args.split_seed)?;
    Ok(Loaded { full, train, test })
}

fn check_features(forest: &Forest, data: &Dataset) -> Result<()> {
    let a: Vec<&str> = forest.features().iter().map(|f| f.name.as_str()).collect();
    let b: Vec<&str> = data.features.iter().map(|f| f.name.as_str()).collect();
    if a != b {
        return Err(Error::Input(format!(
            "forest features [{}] differ from data features [{}]",
            a.join(", "),
            b.join(", ")
        )));
    }
    Ok(())
}

fn data_inputs(args: &DataArgs) -> Vec<PathBuf> {
    vec![args.data.clone(), args.schema.clone()]
}

fn synth(a: SynthArgs) -> Result<Outcome> {
    let schema_out = a
        .schema_out
        .unwrap_or_else(|| sibling(&a.output, ".schema.json"));
    let mut cfg = SynthConfig::new(a.n, a.d, a.seed);
    cfg.noise = a.noise;
    let ds = synth_generate(cfg)?;
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io(dir))?;
    }
    ds.write_csv(&a.output)?;
    write(&schema_out, &synth_schema(a.d).to_json())?;
    Ok(Outcome {
        outputs: vec![a.output, schema_out],
        seeds: BTreeMap::from([("seed".into(), a.seed)]),
        ..Outcome::default()
    })
}

fn train_cmd(a: TrainArgs) -> Result<Outcome> {
    let imp_path = a
        .importances
        .clone()
        .unwrap_or_else(|| sibling(&a.output, ".importances.csv"));
    let inputs = data_inputs(&a.data);
    guard(&inputs, &[a.output.clone(), imp_path.clone()])?;
    let data = load_data(&a.data)?;
    let mut cfg = TrainConfig::new(a.trees, a.depth, a.seed);
    cfg.features_per_split = a.max_features;
    let forest = train(&data.train, &cfg)?;
    let importances = impurity_importances(&forest, &data.train)?;
    write(&a.output, &forest.to_json())?;
    write(
        &imp_path,
        &importances_to_csv(&importances, forest.features()),
    )?;
    println!("train accuracy {:.4}", accuracy(&forest, &data.train)?);
    if !data.test.is_empty() {
        println!("test accuracy {:.4}", accuracy(&forest, &data.test)?);
    }
    Ok(Outcome {
        inputs,
        outputs: vec![a.output, imp_path],
        seeds: BTreeMap::from([
            ("seed".into(), a.seed),
            ("split_seed".into(), a.data.split_seed),
        ]),
        ..Outcome::default()
    })
}

fn select(forest: &Forest, data: &Dataset, which: &str, target: u8) -> Result<Vec<Individual>> {
    if which == "all-off-target" {
        return off_target(forest, data, target);
    }
    let id: u64 = which.parse().map_err(|_| {
        Error::Input(format!(
            "--individual expects a row id or `all-off-target`, got `{which}`"
        ))
    })?;
    let pos = data
        .position_of(id)
        .ok_or_else(|| Error::Input(format!("row {id} is not in the selected part")))?;
    Ok(vec![Individual {
        id,
        x: data.rows[pos].clone(),
    }])
}

fn perturbation_spec(
    forest: &Forest,
    data: &Loaded,
    seed: u64,
    freeze: bool,
) -> Result<PerturbationSpec> {
    let spec = PerturbationSpec::from_stats(forest.features(), &data.train.feature_stats(), seed)?;
    Ok(if freeze {
        spec.freeze_immutables(forest.features())
    } else {
        spec
    })
}

fn probs(a: ProbsArgs) -> Result<Outcome> {
    let mut inputs = data_inputs(&a.data);
    inputs.push(a.forest.clone());
    guard(&inputs, std::slice::from_ref(&a.output))?;
    let forest = load_forest(&a.forest)?;
    let data = load_data(&a.data)?;
    check_features(&forest, &data.full)?;
    let target = a.target.unwrap_or(data.full.desired_class);
    let spec =
        perturbation_spec(&forest, &data, a.seed, a.freeze_immutables)?.with_samples(a.samples);
    let cohort = select(&forest, data.part(a.part), &a.individual, target)?;
    let tables = cohort
        .par_iter()
        .map(|ind| estimate_node_probabilities(&forest, &ind.x, &spec, a.max_effort, ind.id))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(&a.output).map_err(io(&a.output))?;
    for t in &tables {
        write(
            &a.output.join(format!("{}.json", t.individual())),
            &t.to_json(&forest),
        )?;
    }
    println!(
        "{} table(s) written to {}",
        tables.len(),
        a.output.display()
    );
    Ok(Outcome {
        inputs,
        outputs: vec![a.output],
        seeds: BTreeMap::from([
            ("seed".into(), a.seed),
            ("split_seed".into(), a.data.split_seed),
        ]),
        ..Outcome::default()
    })
}

fn solver_config(a: &ShiftArgs) -> SolverConfig {
    let objective = match a.objective {
        ObjectiveArg::Max => Objective::MaxPath,
        ObjectiveArg::Min => Objective::MinPath,
        ObjectiveArg::Kappa => Objective::KappaPath,
        ObjectiveArg::Distance => Objective::MinDistance,
    };
    let kappa = match (a.kappa, a.kappa_fraction) {
        (Some(k), _) => Kappa::Rank(k),
        (None, Some(f)) => Kappa::Fraction(f),
        (None, None) => Kappa::Fraction(0.5),
    };
    let mut cfg = SolverConfig::new(objective).kappa(kappa, a.mu);
    cfg.mu_direction = match a.mu_direction {
        MuDirectionArg::AtLeast => MuDirection::AtLeast,
        MuDirectionArg::AtMost => MuDirection::AtMost,
    };
    cfg.strict_mu = a.strict_mu;
    cfg.positive_leaves_only = a.positive_leaves_only;
    cfg.norm = match a.norm {
        NormArg::L1 => Norm::L1,
        NormArg::L2 => Norm::L2,
        NormArg::Linf => Norm::Linf,
    };
    cfg.time_limit = a.time_limit.map(Duration::from_secs_f64);
    cfg
}

fn table_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let p = entry.map_err(io(dir))?.path();
        let name = p.file_name().unwrap_or_default().to_string_lossy();
        if p.extension().is_some_and(|e| e == "json")
            && name != MANIFEST_NAME
            && !name.ends_with(".manifest.json")
        {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn shift_one(
    forest: &Forest,
    table: Option<&NodeProbabilityTable>,
    a: &ShiftArgs,
    config: &SolverConfig,
) -> Result<ShiftOutput> {
    let x0 = match (&a.x0, table.and_then(|t| t.x0())) {
        (Some(x), _) => x.clone(),
        (None, Some(x)) => x.to_vec(),
        (None, None) => {
            return Err(Error::Input(
                "no starting point: pass --x0 or a table that records x0".into(),
            ))
        }
    };
    let max_effort = a.max_effort.or(table.map(|t| t.max_effort())).unwrap_or(1);
    let mut instance = ProblemInstance::new(x0, a.target, a.eta, max_effort);
    instance.epsilon = a.epsilon;
    let report = solve(forest, &instance, table, config)?;
    let verdict = report
        .solution
        .as_ref()
        .map(|s| verify_solution(forest, &instance, table, config, s));
    Ok(ShiftOutput {
        individual: table.map(|t| t.individual()),
        report,
        verdict,
    })
}

fn describe(out: &ShiftOutput, forest: &Forest) -> String {
    let who = out
        .individual
        .map_or_else(String::new, |i| format!("individual {i}: "));
    match &out.report.solution {
        Some(s) => {
            let effort: Vec<String> = s
                .effort
                .support()
                .map(|j| format!("{}x{}", forest.features()[j].name, s.effort.level(j)))
                .collect();
            let verdict = match &out.verdict {
                Some(v) if v.passed => "verified".to_string(),
                Some(v) => format!("verification failed: {}", v.failures.join("; ")),
                None => String::new(),
            };
            format!(
                "{who}{:?} objective {} effort [{}] {verdict}",
                out.report.status,
                s.objective,
                effort.join(", ")
            )
        }
        None => format!(
            "{who}{:?}{}",
            out.report.status,
            out.report
                .message
                .as_deref()
                .map_or(String::new(), |m| format!(": {m}"))
        ),
    }
}

fn shift(a: ShiftArgs) -> Result<Outcome> {
    let mut inputs = vec![a.forest.clone()];
    inputs.extend(a.probs.clone());
    guard(&inputs, std::slice::from_ref(&a.output))?;
    let forest = load_forest(&a.forest)?;
    let config = solver_config(&a);
    let code = match &a.probs {
        Some(dir) if dir.is_dir() => {
            let files = table_files(dir)?;
            let outputs = files
                .par_iter()
                .map(|f| {
                    let table = NodeProbabilityTable::from_json(&read(f)?, &forest)?;
                    shift_one(&forest, Some(&table), &a, &config)
                })
                .collect::<Result<Vec<_>>>()?;
            fs::create_dir_all(&a.output).map_err(io(&a.output))?;
            let mut counts = BTreeMap::new();
            for (f, out) in files.iter().zip(&outputs) {
                write(
                    &a.output.join(f.file_name().expect("listed file")),
                    &serde_json::to_string_pretty(out).expect("serializes"),
                )?;
                *counts
                    .entry(format!("{:?}", out.report.status).to_lowercase())
                    .or_insert(0usize) += 1;
                if out.verdict.as_ref().is_some_and(|v| !v.passed) {
                    eprintln!("warning: {}", describe(out, &forest));
                }
            }
            let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{v} {k}")).collect();
            println!("{} solution(s): {}", outputs.len(), summary.join(", "));
            EXIT_OK
        }
        probs => {
            let table = probs
                .as_deref()
                .map(|p| NodeProbabilityTable::from_json(&read(p)?, &forest))
                .transpose()?;
            let out = shift_one(&forest, table.as_ref(), &a, &config)?;
            write(
                &a.output,
                &serde_json::to_string_pretty(&out).expect("serializes"),
            )?;
            println!("{}", describe(&out, &forest));
            match out.report.status {
                Status::Optimal => EXIT_OK,
                Status::Infeasible => EXIT_INFEASIBLE,
                Status::Timeout => EXIT_TIMEOUT,
            }
        }
    };
    Ok(Outcome {
        code,
        inputs,
        outputs: vec![a.output],
        ..Outcome::default()
    })
}

fn objective_label(kind: Objective) -> &'static str {
    match kind {
        Objective::MaxPath => "max-path",
        Objective::MinPath => "min-path",
        Objective::KappaPath => "kappa-path",
        Objective::MinDistance => "min-distance",
    }
}

fn rank(a: RankArgs) -> Result<Outcome> {
    let mut inputs = vec![a.forest.clone()];
    let svg = a.output.with_extension("svg");
    let forest = load_forest(&a.forest)?;
    let features = forest.features();
    let mut seeds = BTreeMap::new();
    let mut ranking = if let Some(dir) = &a.solutions {
        inputs.push(dir.clone());
        guard(&inputs, &[a.output.clone(), svg.clone()])?;
        let reports = table_files(dir)?
            .iter()
            .map(|f| {
                serde_json::from_str::<ShiftOutput>(&read(f)?)
                    .map(|o| o.report)
                    .map_err(|e| Error::Parse {
                        location: f.display().to_string(),
                        message: e.to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let label = a
            .method
            .clone()
            .or_else(|| {
                reports
                    .first()
                    .map(|r| objective_label(r.objective_kind).to_string())
            })
            .unwrap_or_else(|| "effort".into());
        let r = effort_ranking(&label, &reports, features, a.eta, a.weighted)?;
        if r.excluded > 0 {
            eprintln!(
                "warning: {} of {} solutions excluded (infeasible or timed out)",
                r.excluded,
                reports.len()
            );
        }
        r
    } else if let Some(path) = &a.importances {
        inputs.push(path.clone());
        guard(&inputs, &[a.output.clone(), svg.clone()])?;
        rfr_ranking(
            &importances_from_csv(&read(path)?, features)?,
            features,
            a.eta,
        )?
    } else {
        seeds.insert("seed".into(), a.seed);
        rsr_ranking(features, a.eta, a.seed)?
    };
    if let Some(m) = &a.method {
        ranking.method = m.clone();
    }
    write(&a.output, &ranking.to_csv())?;
    write(&svg, &ranking.to_svg())?;
    let top: Vec<&str> = ranking
        .entries
        .iter()
        .take(a.eta)
        .map(|e| e.name.as_str())
        .collect();
    println!("{} top {}: {}", ranking.method, a.eta, top.join(", "));
    Ok(Outcome {
        inputs,
        outputs: vec![a.output, svg],
        seeds,
        ..Outcome::default()
    })
}

struct RankingArg {
    label: String,
    eta: Option<usize>,
    path: PathBuf,
}

fn parse_ranking_arg(s: &str) -> Result<RankingArg> {
    let (head, path) = match s.split_once('=') {
        Some((h, p)) => (Some(h), p),
        None => (None, s),
    };
    let path = PathBuf::from(path);
    let stem = path
        .file_stem()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned();
    let (label, eta) = match head {
        None => (stem, None),
        Some(h) => match h.split_once('@') {
            Some((l, e)) => {
                let eta = e
                    .parse()
                    .map_err(|_| Error::Input(format!("bad eta in --ranking `{s}`")))?;
                (if l.is_empty() { stem } else { l.to_string() }, Some(eta))
            }
            None => (h.to_string(), None),
        },
    };
    Ok(RankingArg { label, eta, path })
}

fn simulate(a: SimulateArgs) -> Result<Outcome> {
    let specs = a
        .ranking
        .iter()
        .map(|s| parse_ranking_arg(s))
        .collect::<Result<Vec<_>>>()?;
    let mut inputs = data_inputs(&a.data);
    inputs.push(a.forest.clone());
    inputs.extend(specs.iter().map(|s| s.path.clone()));
    let normalized_path = sibling(&a.output, ".normalized.csv");
    let json_path = sibling(&a.output, ".json");
    guard(
        &inputs,
        &[a.output.clone(), normalized_path.clone(), json_path.clone()],
    )?;
    if specs.is_empty() && a.rsr == 0 && !a.baseline {
        return Err(Error::Input(
            "nothing to simulate: give --ranking, --rsr or --baseline".into(),
        ));
    }

    let forest = load_forest(&a.forest)?;
    let data = load_data(&a.data)?;
    check_features(&forest, &data.full)?;
    let target = a.target.unwrap_or(data.full.desired_class);
    let spec = perturbation_spec(&forest, &data, a.seed, a.freeze_immutables)?;
    let cohort = off_target(&forest, data.part(a.part), target)?;
    if cohort.is_empty() {
        return Err(Error::Simulation(
            "no individual in the selected part is off target".into(),
        ));
    }

    let mut groups: Vec<(String, Option<usize>, Vec<Ranking>)> = Vec::new();
    for s in &specs {
        let r = Ranking::from_csv(&read(&s.path)?, forest.features(), &s.label)?;
        match groups.iter_mut().find(|g| g.0 == s.label && g.1 == s.eta) {
            Some(g) => g.2.push(r),
            None => groups.push((s.label.clone(), s.eta, vec![r])),
        }
    }
    let run = |features: Vec<usize>| -> Result<(Vec<usize>, _)> {
        let o = simulate_cohort(&forest, &cohort, &features, &spec, target, a.reps, a.seed)?;
        Ok((features, o))
    };
    let mut cells = Vec::new();
    for &eta in &a.eta {
        for (label, only, rankings) in &groups {
            if only.is_some_and(|e| e != eta) {
                continue;
            }
            let mut runs = Vec::new();
            for r in rankings {
                if r.entries.len() < eta {
                    return Err(Error::Ranking(format!(
                        "ranking `{label}` lists {} features, eta is {eta}",
                        r.entries.len()
                    )));
                }
                runs.push(run(r.top(eta))?);
            }
            cells.push(SimCell::new(label.clone(), eta, runs));
        }
        if a.rsr > 0 {
            let runs = rsr_rankings(forest.features(), eta, a.seed, a.rsr)?
                .into_iter()
                .map(|r| run(r.top(eta)))
                .collect::<Result<Vec<_>>>()?;
            cells.push(SimCell::new("RSR", eta, runs));
        }
    }
    let baseline = if a.baseline {
        Some(feasible_baseline(
            &forest, &cohort, &spec, target, a.reps, a.seed,
        )?)
    } else {
        None
    };
    let report = SimReport::build(cells, baseline, a.seed);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let raw = report.raw_csv();
    write(&a.output, &raw)?;
    print!(
        "cohort {} individuals, {} replications\n{raw}",
        report.cohort, report.reps
    );
    let mut outputs = vec![a.output.clone()];
    if let Some(b) = report.baseline_percent {
        println!("baseline {b:.2}");
    }
    if let Some(norm) = report.normalized_csv() {
        write(&normalized_path, &norm)?;
        print!("normalized\n{norm}");
        outputs.push(normalized_path);
    }
    write(&json_path, &report.to_json())?;
    outputs.push(json_path);
    Ok(Outcome {
        inputs,
        outputs,
        seeds: BTreeMap::from([
            ("seed".into(), a.seed),
            ("split_seed".into(), a.data.split_seed),
        ]),
        ..Outcome::default()
    })
}

fn demo_firefighter() -> Result<Outcome> {
    let forest = firefighter_forest();
    let table = firefighter_table();
    let x0 = table.x0().expect("fixture records x0").to_vec();
    let instance = ProblemInstance::new(x0, 1, 1, 1);
    let names: Vec<&str> = forest.features().iter().map(|f| f.name.as_str()).collect();
    let effort_name =
        |e: &EffortAllocation| e.support().map(|j| names[j]).collect::<Vec<_>>().join("+");
    for (label, objective) in [
        ("max-path", Objective::MaxPath),
        ("min-path", Objective::MinPath),
    ] {
        let config = SolverConfig::new(objective);
        let best = match objective {
            Objective::MaxPath => solve_max_path(&forest, &instance, &table, &config)?,
            _ => solve_min_path(&forest, &instance, &table, &config)?,
        };
        let s = best
            .solution
            .as_ref()
            .ok_or_else(|| Error::Contract("fixture must be feasible".into()))?;
        println!(
            "{label:<9} optimum      effort {:<2} {:.2}",
            effort_name(&s.effort),
            s.objective
        );
        let on_s = EffortAllocation(vec![1, 0]);
        let alt = solve_fixed_effort(&forest, &instance, &table, &config, &on_s)?;
        let v = alt
            .objective()
            .ok_or_else(|| Error::Contract("fixture must be feasible".into()))?;
        println!(
            "{label:<9} alternative  effort {:<2} {v:.2}",
            effort_name(&on_s)
        );
    }
    Ok(Outcome::default())
}

fn replay(a: ReplayArgs) -> Result<Outcome> {
    let m = RunManifest::from_json(&read(&a.manifest)?)?;
    let mut args = vec!["probshift".to_string()];
    args.extend(m.args.iter().cloned());
    if !args.iter().any(|x| x == "--threads") {
        args.push("--threads".into());
        args.push(m.threads.to_string());
    }
    let code = crate::run(args);
    if a.no_check || code == EXIT_ERROR {
        return Ok(Outcome {
            code,
            ..Outcome::default()
        });
    }
    let mut mismatches = Vec::new();
    for d in &m.outputs {
        match digest_all(&d.path) {
            Ok(now) if now.len() == 1 && now[0].sha256 == d.sha256 => {}
            _ => mismatches.push(d.path.display().to_string()),
        }
    }
    if mismatches.is_empty() {
        println!("replay reproduced {} output(s)", m.outputs.len());
        Ok(Outcome {
            code,
            ..Outcome::default()
        })
    } else {
        Err(Error::Validation(format!(
            "outputs differ from the manifest: {}",
            mismatches.join(", ")
        )))
    }
}
