//! Command-line front end for the `pacman` binary.
//!
//! Exit codes: 0 success, 1 computation or capacity error, 2 usage or
//! validation error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::committee::{
    committee_value, evaluate_cover, fewshot_select, train_committee, CoverReport, FewShotConfig,
    FewShotOutcome, PolicyCommittee, TaskSource, TrainMode,
};
use crate::cover::{gea, gia_with, max_k_cover_oracle_with, CoverSolution, GiaConfig, DEFAULT_ORACLE_BUDGET};
use crate::error::{Error, Result};
use crate::grad::{optimize_cover, write_trace_csv, Init, OptimizerConfig, TraceRow};
use crate::mdp::{lipschitz_constant, simulation_bound, DynamicEnvironment, MdpTask};
use crate::task_space::{load_task_set, sample_tasks, GmmSpec, TaskFormat, TaskSet};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "pacman", version, about = "Policy committees for multi-task MDPs")]
pub struct Cli {
    /// Base seed for every randomized stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config (or a previous run manifest); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for per-member and per-task parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Sample tasks from a Gaussian mixture.
    GenTasks(GenTasksArgs),
    /// Cluster a task file into a parameter cover.
    Cluster(ClusterArgs),
    /// Exact optimal K-cover miss rate of a small task file.
    Oracle(OracleArgs),
    /// Plan one policy per cover center.
    Train(TrainArgs),
    /// Value-space cover report of a committee.
    Evaluate(EvaluateArgs),
    /// Few-shot member selection on given tasks.
    Fewshot(FewshotArgs),
    /// Sample, cluster, train, evaluate and select in one run.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlgoArg {
    Gea,
    Gia,
    Grad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitArg {
    Gea,
    Gia,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Representative,
    ClusterSum,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Representative => TrainMode::Representative,
            ModeArg::ClusterSum => TrainMode::ClusterSum,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenTasksArgs {
    #[arg(long)]
    pub gmm: PathBuf,
    #[arg(short = 'n', long)]
    pub n: usize,
    /// Output path (default: <out-dir>/tasks.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GradFlags {
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    #[serde(default)]
    pub line_search: bool,
    /// Write the optimization trace CSV here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(short = 'k', long = "k")]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Node budget of the greedy intersection search.
    #[arg(long)]
    pub node_budget: Option<u64>,
    /// Z-score each dimension before clustering.
    #[arg(long)]
    pub standardize: bool,
    #[command(flatten)]
    pub grad: GradFlags,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(short = 'k', long = "k")]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_ORACLE_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub cover: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Representative)]
    pub mode: ModeArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub committee: PathBuf,
    #[arg(long, conflicts_with = "gmm")]
    pub tasks: Option<PathBuf>,
    #[arg(long, requires = "m")]
    pub gmm: Option<PathBuf>,
    /// Number of fresh tasks sampled from --gmm.
    #[arg(short = 'm', long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub epsilon_value: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FewshotArgs {
    #[arg(long)]
    pub env: PathBuf,
    #[arg(long)]
    pub committee: PathBuf,
    #[arg(long)]
    pub tasks: PathBuf,
    /// Episodes per member; derived from --alpha/--beta/--span-bound if absent.
    #[arg(short = 'p', long)]
    pub episodes: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub span_bound: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    #[arg(long)]
    pub common_random_numbers: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long)]
    pub env: Option<PathBuf>,
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub gmm: Option<PathBuf>,
    /// Training tasks sampled from --gmm.
    #[arg(short = 'n', long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(short = 'k', long = "k")]
    pub k: Option<usize>,
    #[arg(long, value_enum)]
    pub algo: Option<AlgoArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub node_budget: Option<u64>,
    /// Value-space tolerance; defaults to the simulation-lemma bound.
    #[arg(long)]
    pub epsilon_value: Option<f64>,
    /// Held-out evaluation tasks file.
    #[arg(long)]
    pub eval_tasks: Option<PathBuf>,
    /// Held-out tasks sampled from --gmm.
    #[arg(long)]
    pub eval_m: Option<usize>,
    /// Number of evaluation tasks used for few-shot selection.
    #[arg(long)]
    pub fewshot_tasks: Option<usize>,
    #[arg(long)]
    pub fewshot_p: Option<u64>,
    #[arg(long)]
    pub span_bound: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[command(flatten)]
    #[serde(default)]
    pub grad: GradFlags,
    #[arg(skip)]
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A JSON document tagged with its schema version.
#[derive(Debug, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub schema_version: u32,
    #[serde(flatten)]
    pub body: T,
}

fn versioned_json<T: Serialize>(body: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(&Versioned {
        schema_version: SCHEMA_VERSION,
        body,
    })?;
    v.push(b'\n');
    Ok(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Record of a run: enough to replay it and to check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command_line: Vec<String>,
    pub config: PipelineArgs,
    pub seed: u64,
    pub library_version: String,
    pub stages: Vec<StageTiming>,
    pub outputs: Vec<OutputRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Outputs {
    files: Vec<OutputRecord>,
}

impl Outputs {
    fn new() -> Self {
        Outputs { files: Vec::new() }
    }

    fn write(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        self.files.push(OutputRecord {
            path: path.to_path_buf(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }
}

/// Error raised by a CLI command, carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError {
            code: if e.is_usage() { 2 } else { 1 },
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError {
        code: 2,
        message: message.into(),
    }
}

fn at_stage(stage: &'static str) -> impl Fn(Error) -> CliError {
    move |e| {
        let mut c = CliError::from(e);
        c.message = format!("stage {stage} failed: {}", c.message);
        c
    }
}

/// Parses `args` and runs the command; returns the exit code. Diagnostics go
/// to stderr and summaries to stdout.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let command_line = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(cli, command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn dispatch(cli: Cli, command_line: Vec<String>) -> std::result::Result<(), CliError> {
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(t) = cli.threads {
            if t == 0 {
                return Err(usage("--threads must be >= 1"));
            }
            b = b.num_threads(t);
        }
        b.build().map_err(|e| usage(format!("thread pool: {e}")))?
    };
    let out_dir = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    pool.install(|| match cli.command {
        Command::GenTasks(a) => cmd_gen_tasks(&a, cli.seed.unwrap_or(0), &out_dir),
        Command::Cluster(a) => cmd_cluster(&a, cli.seed.unwrap_or(0), &out_dir),
        Command::Oracle(a) => cmd_oracle(&a),
        Command::Train(a) => cmd_train(&a, &out_dir),
        Command::Evaluate(a) => cmd_evaluate(&a, cli.seed.unwrap_or(0), &out_dir),
        Command::Fewshot(a) => cmd_fewshot(&a, cli.seed.unwrap_or(0), &out_dir),
        Command::Pipeline(a) => {
            cmd_pipeline(a, cli.config.as_deref(), cli.seed, &out_dir, command_line).map(|_| ())
        }
    })
}

fn load_tasks(path: &Path) -> Result<TaskSet> {
    load_task_set(path, TaskFormat::from_path(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

pub fn cmd_gen_tasks(a: &GenTasksArgs, seed: u64, out_dir: &Path) -> std::result::Result<(), CliError> {
    let gmm = GmmSpec::load(&a.gmm)?;
    let tasks = sample_tasks(&gmm, a.n, seed)?;
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("tasks.csv"));
    let bytes = match TaskFormat::from_path(&out) {
        TaskFormat::Csv => tasks.to_csv_bytes()?,
        TaskFormat::Json => {
            tasks.save(&out, TaskFormat::Json)?;
            println!("wrote {} tasks (d={}) to {}", tasks.len(), tasks.dim(), out.display());
            return Ok(());
        }
    };
    Outputs::new().write(&out, &bytes)?;
    println!("wrote {} tasks (d={}) to {}", tasks.len(), tasks.dim(), out.display());
    Ok(())
}

fn optimizer_config(g: &GradFlags, seed: u64, node_budget: Option<u64>) -> OptimizerConfig {
    let mut cfg = OptimizerConfig {
        seed,
        line_search: g.line_search,
        ..Default::default()
    };
    cfg.init = match g.init.unwrap_or(InitArg::Gea) {
        InitArg::Gea => Init::Gea,
        InitArg::Gia => Init::Gia,
        InitArg::Random => Init::Random,
    };
    if let Some(s) = g.step_size {
        cfg.step_size = Some(s);
    }
    if let Some(m) = g.max_iters {
        cfg.max_iters = m;
    }
    if let Some(t) = g.tolerance {
        cfg.tolerance = t;
    }
    if let Some(t) = g.temperature {
        cfg.temperature = t;
    }
    if let Some(b) = node_budget {
        cfg.gia.node_budget = b;
    }
    cfg
}

/// Runs one clustering algorithm; the grad trace is returned when produced.
fn cluster_tasks(
    tasks: &TaskSet,
    algo: AlgoArg,
    epsilon: f64,
    k: usize,
    node_budget: Option<u64>,
    grad: &GradFlags,
    seed: u64,
) -> Result<(CoverSolution, Option<Vec<TraceRow>>)> {
    let gia_cfg = GiaConfig {
        node_budget: node_budget.unwrap_or(GiaConfig::default().node_budget),
    };
    match algo {
        AlgoArg::Gea => Ok((gea(tasks, epsilon, k)?, None)),
        AlgoArg::Gia => Ok((gia_with(tasks, epsilon, k, &gia_cfg)?, None)),
        AlgoArg::Grad => {
            let cfg = optimizer_config(grad, seed, node_budget);
            let out = optimize_cover(tasks, epsilon, k, &cfg)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!(
                "grad: {} iterations, soft objective {:e}, step {:e}",
                out.iterations, out.soft_objective, out.step_size
            );
            Ok((out.solution, Some(out.trace)))
        }
    }
}

fn summary_line(sol: &CoverSolution, n: usize) -> String {
    format!("covered {}/{} (δ̂={:.6})", sol.covered_count, n, sol.miss_rate)
}

fn check_k(k: usize) -> std::result::Result<(), CliError> {
    if k == 0 {
        Err(usage("K must be >= 1"))
    } else {
        Ok(())
    }
}

pub fn cmd_cluster(a: &ClusterArgs, seed: u64, out_dir: &Path) -> std::result::Result<(), CliError> {
    check_k(a.k)?;
    let mut tasks = load_tasks(&a.tasks)?;
    if a.standardize {
        tasks = tasks.standardized();
    }
    let (sol, trace) = cluster_tasks(&tasks, a.algo, a.epsilon, a.k, a.node_budget, &a.grad, seed)?;
    let mut outputs = Outputs::new();
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("cover.json"));
    outputs.write(&out, &versioned_json(&sol)?)?;
    if let (Some(trace), Some(path)) = (trace, a.grad.trace.as_ref()) {
        write_trace_csv(&trace, path)?;
    }
    println!("{}", summary_line(&sol, tasks.len()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleReport {
    epsilon: f64,
    k: usize,
    delta_star: f64,
    covered_count: usize,
    n: usize,
    centers: Vec<Vec<f64>>,
}

pub fn cmd_oracle(a: &OracleArgs) -> std::result::Result<(), CliError> {
    check_k(a.k)?;
    let tasks = load_tasks(&a.tasks)?;
    let opt = max_k_cover_oracle_with(&tasks, a.epsilon, a.k, a.budget)?;
    let report = OracleReport {
        epsilon: a.epsilon,
        k: a.k,
        delta_star: opt.miss_rate,
        covered_count: opt.covered_count,
        n: tasks.len(),
        centers: opt.centers.into_iter().map(Into::into).collect(),
    };
    println!("δ*={} (covered {}/{})", report.delta_star, report.covered_count, report.n);
    println!("{}", serde_json::to_string(&Versioned { schema_version: SCHEMA_VERSION, body: &report }).map_err(Error::from)?);
    Ok(())
}

pub fn cmd_train(a: &TrainArgs, out_dir: &Path) -> std::result::Result<(), CliError> {
    let env = DynamicEnvironment::load(&a.env)?;
    let tasks = load_tasks(&a.tasks)?;
    let cover: CoverSolution = read_json(&a.cover)?;
    let committee = train_committee(&env, &tasks, &cover, a.mode.into())?;
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("committee.json"));
    Outputs::new().write(&out, &versioned_json(&committee)?)?;
    println!("trained {} committee members", committee.k());
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs, seed: u64, out_dir: &Path) -> std::result::Result<(), CliError> {
    let env = DynamicEnvironment::load(&a.env)?;
    let committee: PolicyCommittee = read_json(&a.committee)?;
    let report = match (&a.tasks, &a.gmm) {
        (Some(t), _) => {
            let tasks = load_tasks(t)?;
            evaluate_cover(&committee, &env, TaskSource::Listed(&tasks), a.epsilon_value)?
        }
        (None, Some(g)) => {
            let gmm = GmmSpec::load(g)?;
            let m = a.m.ok_or_else(|| usage("--gmm requires -m"))?;
            evaluate_cover(&committee, &env, TaskSource::Sampled { gmm: &gmm, m, seed }, a.epsilon_value)?
        }
        (None, None) => return Err(usage("evaluate needs --tasks or --gmm with -m")),
    };
    let mut outputs = Outputs::new();
    outputs.write(&a.out.clone().unwrap_or_else(|| out_dir.join("report.json")), &versioned_json(&report)?)?;
    outputs.write(&a.csv.clone().unwrap_or_else(|| out_dir.join("report.csv")), &report.to_csv_bytes())?;
    println!(
        "delta_hat={} over {} tasks at epsilon_value={}",
        report.delta_hat,
        report.per_task.len(),
        report.epsilon_value
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotRecord {
    pub task_id: String,
    #[serde(flatten)]
    pub outcome: FewShotOutcome,
    /// Exact best member, for reference.
    pub exact_best: usize,
    pub chosen_value: f64,
    pub best_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotReport {
    pub config: FewShotConfig,
    pub tasks: Vec<FewShotRecord>,
}

fn run_fewshot(
    committee: &PolicyCommittee,
    env: &DynamicEnvironment,
    tasks: &TaskSet,
    cfg: &FewShotConfig,
) -> Result<FewShotReport> {
    let mut records = Vec::with_capacity(tasks.len());
    for (i, (id, theta)) in tasks.iter().enumerate() {
        let task = MdpTask::new(theta.clone());
        let task_cfg = FewShotConfig {
            seed: cfg.seed.wrapping_add((i as u64).wrapping_mul(1_000_003)),
            ..cfg.clone()
        };
        let outcome = fewshot_select(committee, env, &task, &task_cfg)?;
        let (best_value, exact_best) = committee_value(committee, env, &task)?;
        let chosen_value = crate::mdp::policy_value(env, &task, &committee.members[outcome.chosen].policy)?;
        records.push(FewShotRecord {
            task_id: id.to_string(),
            outcome,
            exact_best,
            chosen_value,
            best_value,
        });
    }
    Ok(FewShotReport {
        config: cfg.clone(),
        tasks: records,
    })
}

fn fewshot_config(
    env: &DynamicEnvironment,
    p: Option<u64>,
    span_bound: f64,
    alpha: f64,
    beta: f64,
    seed: u64,
    crn: bool,
) -> Result<FewShotConfig> {
    let mut cfg = match p {
        Some(p) => FewShotConfig {
            episodes_per_policy: p,
            span_bound,
            alpha,
            beta,
            seed,
            common_random_numbers: false,
        },
        None => FewShotConfig::from_guarantee(env.horizon(), span_bound, alpha, beta, seed)?,
    };
    cfg.common_random_numbers = crn;
    Ok(cfg)
}

pub fn cmd_fewshot(a: &FewshotArgs, seed: u64, out_dir: &Path) -> std::result::Result<(), CliError> {
    let env = DynamicEnvironment::load(&a.env)?;
    let committee: PolicyCommittee = read_json(&a.committee)?;
    let tasks = load_tasks(&a.tasks)?;
    let cfg = fewshot_config(&env, a.episodes, a.span_bound, a.alpha, a.beta, seed, a.common_random_numbers)?;
    let report = run_fewshot(&committee, &env, &tasks, &cfg)?;
    let out = a.out.clone().unwrap_or_else(|| out_dir.join("fewshot.json"));
    Outputs::new().write(&out, &versioned_json(&report)?)?;
    let hits = report.tasks.iter().filter(|r| r.outcome.chosen == r.exact_best).count();
    println!(
        "p={} per member; picked the exact best member on {hits}/{} tasks",
        cfg.episodes_per_policy,
        report.tasks.len()
    );
    Ok(())
}

/// Reads a pipeline config; a run manifest is accepted and its `config` used.
fn read_pipeline_config(path: &Path) -> Result<PipelineArgs> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let cfg = match value.get("config") {
        Some(inner) if value.get("outputs").is_some() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(cfg).map_err(|e| Error::parse(path.display().to_string(), e.to_string()))
}

fn merge<T: Clone>(flag: &Option<T>, config: &Option<T>) -> Option<T> {
    flag.clone().or_else(|| config.clone())
}

fn resolve(flags: PipelineArgs, config: PipelineArgs, seed: Option<u64>) -> PipelineArgs {
    PipelineArgs {
        env: merge(&flags.env, &config.env),
        tasks: merge(&flags.tasks, &config.tasks),
        gmm: merge(&flags.gmm, &config.gmm),
        n: merge(&flags.n, &config.n),
        epsilon: merge(&flags.epsilon, &config.epsilon),
        k: merge(&flags.k, &config.k),
        algo: merge(&flags.algo, &config.algo),
        mode: merge(&flags.mode, &config.mode),
        node_budget: merge(&flags.node_budget, &config.node_budget),
        epsilon_value: merge(&flags.epsilon_value, &config.epsilon_value),
        eval_tasks: merge(&flags.eval_tasks, &config.eval_tasks),
        eval_m: merge(&flags.eval_m, &config.eval_m),
        fewshot_tasks: merge(&flags.fewshot_tasks, &config.fewshot_tasks),
        fewshot_p: merge(&flags.fewshot_p, &config.fewshot_p),
        span_bound: merge(&flags.span_bound, &config.span_bound),
        alpha: merge(&flags.alpha, &config.alpha),
        beta: merge(&flags.beta, &config.beta),
        grad: GradFlags {
            init: merge(&flags.grad.init, &config.grad.init),
            step_size: merge(&flags.grad.step_size, &config.grad.step_size),
            max_iters: merge(&flags.grad.max_iters, &config.grad.max_iters),
            tolerance: merge(&flags.grad.tolerance, &config.grad.tolerance),
            temperature: merge(&flags.grad.temperature, &config.grad.temperature),
            line_search: flags.grad.line_search || config.grad.line_search,
            trace: merge(&flags.grad.trace, &config.grad.trace),
        },
        seed: seed.or(config.seed).or(Some(0)),
    }
}

/// Paths of everything a pipeline run produced.
#[derive(Debug, Clone)]
pub struct PipelineOutputs {
    pub manifest: RunManifest,
    pub cover: CoverSolution,
    pub report: CoverReport,
    pub fewshot: FewShotReport,
}

pub fn cmd_pipeline(
    flags: PipelineArgs,
    config_path: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
    command_line: Vec<String>,
) -> std::result::Result<PipelineOutputs, CliError> {
    let config = match config_path {
        Some(p) => read_pipeline_config(p)?,
        None => PipelineArgs::default(),
    };
    let cfg = resolve(flags, config, seed);
    let seed = cfg.seed.unwrap_or(0);
    let epsilon = cfg.epsilon.ok_or_else(|| usage("pipeline needs --epsilon"))?;
    let k = cfg.k.ok_or_else(|| usage("pipeline needs -k"))?;
    check_k(k)?;
    let algo = cfg.algo.unwrap_or(AlgoArg::Gia);
    let mode = cfg.mode.unwrap_or(ModeArg::Representative);
    let mut stages = Vec::new();

    // load everything before writing anything
    let t0 = Instant::now();
    let env_path = cfg.env.as_ref().ok_or_else(|| usage("pipeline needs --env"))?;
    let env = DynamicEnvironment::load(env_path).map_err(at_stage("load"))?;
    let gmm = match &cfg.gmm {
        Some(p) => Some(GmmSpec::load(p).map_err(at_stage("load"))?),
        None => None,
    };
    let (tasks, sampled_tasks) = match (&cfg.tasks, &gmm) {
        (Some(p), _) => (load_tasks(p).map_err(at_stage("load"))?, false),
        (None, Some(g)) => {
            let n = cfg.n.ok_or_else(|| usage("--gmm requires -n for training tasks"))?;
            (sample_tasks(g, n, seed).map_err(at_stage("load"))?, true)
        }
        (None, None) => return Err(usage("pipeline needs --tasks or --gmm")),
    };
    let eval_tasks = match (&cfg.eval_tasks, &gmm, cfg.eval_m) {
        (Some(p), _, _) => load_tasks(p).map_err(at_stage("load"))?,
        (None, Some(g), Some(m)) => sample_tasks(g, m, seed.wrapping_add(1)).map_err(at_stage("load"))?,
        _ => tasks.clone(),
    };
    if tasks.dim() != env.feature_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.feature_dim(),
            found: tasks.dim(),
        })
        .map_err(at_stage("load"));
    }
    stages.push(StageTiming { stage: "load".into(), seconds: t0.elapsed().as_secs_f64() });

    fs::create_dir_all(out_dir).map_err(|e| CliError::from(Error::io(out_dir, e)))?;
    let mut outputs = Outputs::new();
    if sampled_tasks {
        outputs.write(&out_dir.join("tasks.csv"), &tasks.to_csv_bytes()?)?;
    }

    let t0 = Instant::now();
    let (cover, trace) = cluster_tasks(&tasks, algo, epsilon, k, cfg.node_budget, &cfg.grad, seed)
        .map_err(at_stage("cluster"))?;
    outputs.write(&out_dir.join("cover.json"), &versioned_json(&cover)?)?;
    if let Some(trace) = trace {
        let path = out_dir.join("trace.csv");
        write_trace_csv(&trace, &path)?;
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        outputs.files.push(OutputRecord { path, sha256: sha256_hex(&bytes) });
    }
    println!("cluster: {}", summary_line(&cover, tasks.len()));
    stages.push(StageTiming { stage: "cluster".into(), seconds: t0.elapsed().as_secs_f64() });

    let t0 = Instant::now();
    let committee = train_committee(&env, &tasks, &cover, mode.into()).map_err(at_stage("train"))?;
    outputs.write(&out_dir.join("committee.json"), &versioned_json(&committee)?)?;
    stages.push(StageTiming { stage: "train".into(), seconds: t0.elapsed().as_secs_f64() });

    let t0 = Instant::now();
    let epsilon_value = cfg.epsilon_value.unwrap_or_else(|| {
        simulation_bound(lipschitz_constant(&env), env.discount(), env.horizon(), epsilon)
    });
    let report = evaluate_cover(&committee, &env, TaskSource::Listed(&eval_tasks), epsilon_value)
        .map_err(at_stage("evaluate"))?;
    outputs.write(&out_dir.join("report.json"), &versioned_json(&report)?)?;
    outputs.write(&out_dir.join("report.csv"), &report.to_csv_bytes())?;
    println!(
        "evaluate: delta_hat={:.6} mean V^Π={:.6} mean V*={:.6} (epsilon_value={})",
        report.delta_hat, report.mean_v_committee, report.mean_v_star, epsilon_value
    );
    stages.push(StageTiming { stage: "evaluate".into(), seconds: t0.elapsed().as_secs_f64() });

    let t0 = Instant::now();
    let few_n = cfg.fewshot_tasks.unwrap_or(10).min(eval_tasks.len());
    let few_tasks = TaskSet::new(
        eval_tasks.ids()[..few_n].to_vec(),
        eval_tasks.tasks()[..few_n].to_vec(),
    )?;
    let fcfg = fewshot_config(
        &env,
        cfg.fewshot_p,
        cfg.span_bound.unwrap_or(0.0),
        cfg.alpha.unwrap_or(0.1),
        cfg.beta.unwrap_or(0.5),
        seed.wrapping_add(2),
        false,
    )
    .map_err(at_stage("fewshot"))?;
    let fewshot = run_fewshot(&committee, &env, &few_tasks, &fcfg).map_err(at_stage("fewshot"))?;
    outputs.write(&out_dir.join("fewshot.json"), &versioned_json(&fewshot)?)?;
    stages.push(StageTiming { stage: "fewshot".into(), seconds: t0.elapsed().as_secs_f64() });

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        command_line,
        config: cfg,
        seed,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        stages,
        outputs: outputs.files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(Error::from)?;
    bytes.push(b'\n');
    let mpath = out_dir.join("manifest.json");
    fs::write(&mpath, bytes).map_err(|e| CliError::from(Error::io(&mpath, e)))?;
    Ok(PipelineOutputs {
        manifest,
        cover,
        report,
        fewshot,
    })
}
