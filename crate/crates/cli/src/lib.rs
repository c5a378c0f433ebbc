//! The `probshift` command line: train, estimate, solve, rank, simulate.

mod commands;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

use manifest::{digest_all, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_TIMEOUT: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "probshift",
    version,
    about = "Probabilistic feature shifts for tree ensembles"
)]
pub struct Cli {
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "PROBSHIFT_THREADS", default_value_t = 0)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its schema.
    Synth(SynthArgs),
    /// Train a random forest on the training split.
    Train(TrainArgs),
    /// Estimate per-individual branch probabilities.
    Probs(ProbsArgs),
    /// Solve for the best effort allocation and shift.
    Shift(ShiftArgs),
    /// Build a feature ranking.
    Rank(RankArgs),
    /// Simulate rankings on a cohort.
    Simulate(SimulateArgs),
    /// Built-in worked examples.
    Demo {
        #[command(subcommand)]
        which: Demo,
    },
    /// Re-run a recorded command and compare its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Subcommand)]
pub enum Demo {
    /// The two-test admission example.
    Firefighter,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Schema JSON.
    #[arg(long)]
    pub schema: PathBuf,
    /// Share of rows used for training.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub train_fraction: f64,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Part {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 600)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Label flip probability.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    /// Output CSV.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output schema (default: next to the CSV).
    #[arg(long)]
    pub schema_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
    /// Features sampled per split (default: sqrt(d)).
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output forest JSON.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Importances CSV (default: next to the forest).
    #[arg(long)]
    pub importances: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbsArgs {
    #[arg(long)]
    pub forest: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Row id, or `all-off-target`.
    #[arg(long)]
    pub individual: String,
    /// Rows to draw individuals from.
    #[arg(long, value_enum, default_value_t = Part::Train)]
    pub part: Part,
    /// Maximum effort units per feature.
    #[arg(long = "max-effort", visible_alias = "E", default_value_t = 1)]
    pub max_effort: usize,
    /// Monte-Carlo samples per feature and effort level.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold immutable features fixed instead of letting them drift.
    #[arg(long)]
    pub freeze_immutables: bool,
    /// Desired class (default: the schema's).
    #[arg(long)]
    pub target: Option<u8>,
    /// Output directory, one table per individual.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Max,
    Min,
    Kappa,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MuDirectionArg {
    AtLeast,
    AtMost,
}

#[derive(Debug, Args)]
pub struct ShiftArgs {
    #[arg(long)]
    pub forest: PathBuf,
    /// A probability table, or a directory of them.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Starting point for the distance objective when no table is given.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Max)]
    pub objective: ObjectiveArg,
    /// Total effort budget.
    #[arg(long, default_value_t = 1)]
    pub eta: usize,
    /// Maximum effort per feature (default: the table's).
    #[arg(long = "max-effort", visible_alias = "E")]
    pub max_effort: Option<usize>,
    /// κ as a rank.
    #[arg(long, conflicts_with = "kappa_fraction")]
    pub kappa: Option<usize>,
    /// κ as a share of each tree's leaves (default 0.5).
    #[arg(long)]
    pub kappa_fraction: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    pub mu: f64,
    #[arg(long, value_enum, default_value_t = MuDirectionArg::AtLeast)]
    pub mu_direction: MuDirectionArg,
    /// Apply the μ constraint to every tree.
    #[arg(long)]
    pub strict_mu: bool,
    /// Rank only target-class leaves for κ.
    #[arg(long)]
    pub positive_leaves_only: bool,
    #[arg(long, default_value_t = probshift::forest::DEFAULT_EPSILON)]
    pub epsilon: f64,
    /// Seconds.
    #[arg(long)]
    pub time_limit: Option<f64>,
    #[arg(long, value_enum, default_value_t = NormArg::L1)]
    pub norm: NormArg,
    #[arg(long, default_value_t = 1)]
    pub target: u8,
    /// Output JSON (a directory when `--probs` is a directory).
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["solutions", "importances", "random"])))]
pub struct RankArgs {
    /// Forest whose features are ranked.
    #[arg(long)]
    pub forest: PathBuf,
    /// Directory of `shift` outputs.
    #[arg(long)]
    pub solutions: Option<PathBuf>,
    /// Importances CSV written by `train`.
    #[arg(long)]
    pub importances: Option<PathBuf>,
    /// A random selection.
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 1)]
    pub eta: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Score effort units instead of counting solutions.
    #[arg(long)]
    pub weighted: bool,
    /// Label stored with the ranking.
    #[arg(long)]
    pub method: Option<String>,
    /// Output CSV; a bar chart is written next to it.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub forest: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// `[LABEL[@ETA]=]PATH`; repeat for several rankings.
    #[arg(long)]
    pub ranking: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
    pub eta: Vec<usize>,
    #[arg(long, default_value_t = probshift::sim::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random rankings averaged into an `RSR` row (0 for none).
    #[arg(long, default_value_t = 3)]
    pub rsr: usize,
    /// Also simulate the feasible-to-change baseline and write the
    /// normalized table.
    #[arg(long)]
    pub baseline: bool,
    #[arg(long, value_enum, default_value_t = Part::Test)]
    pub part: Part,
    #[arg(long)]
    pub freeze_immutables: bool,
    #[arg(long)]
    pub target: Option<u8>,
    /// Raw CSV; the normalized CSV and JSON detail go next to it.
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Re-run without comparing output digests.
    #[arg(long)]
    pub no_check: bool,
}

/// What a command did, for the manifest.
#[derive(Debug, Default)]
pub(crate) struct Outcome {
    pub code: i32,
    pub inputs: Vec<PathBuf>,
    /// The primary output (file or directory) and any side outputs.
    pub outputs: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let threads = pool.current_num_threads();
    let start = Instant::now();
    let name = command_name(&cli.command);
    let result = pool.install(|| commands::execute(cli.command));
    match result.and_then(|outcome| {
        if !outcome.outputs.is_empty() {
            let recorded: Vec<String> = args
                .iter()
                .skip(1)
                .map(|a| a.to_string_lossy().into_owned())
                .collect();
            write_manifest(name, recorded, threads, &outcome, start)?;
        }
        Ok(outcome.code)
    }) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Probs(_) => "probs",
        Command::Shift(_) => "shift",
        Command::Rank(_) => "rank",
        Command::Simulate(_) => "simulate",
        Command::Demo { .. } => "demo",
        Command::Replay(_) => "replay",
    }
}

fn write_manifest(
    command: &str,
    args: Vec<String>,
    threads: usize,
    outcome: &Outcome,
    start: Instant,
) -> probshift::Result<()> {
    let mut inputs = Vec::new();
    for p in &outcome.inputs {
        inputs.extend(digest_all(p)?);
    }
    let mut outputs = Vec::new();
    for p in &outcome.outputs {
        outputs.extend(digest_all(p)?);
    }
    let m = RunManifest {
        tool: "probshift".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        args,
        seeds: outcome.seeds.clone(),
        threads,
        inputs,
        outputs,
        wall_time_ms: start.elapsed().as_millis(),
    };
    let path = RunManifest::path_for(&outcome.outputs[0]);
    std::fs::write(&path, m.to_json()).map_err(|e| probshift::Error::Io { path, source: e })
}
