//! `batchshop` command line. [`run`] is the whole program; the binary only
//! forwards process arguments and the exit code.
//!
//! Exit codes: 0 success, 1 usage, 2 validation failure, 3 guard exceeded.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use batchshop::env::{read_trajectory, replay_trajectory, rollout, write_trajectory, Env, Features, RewardConfig, TrajectoryHeader};
use batchshop::eval::{render_gantt, validate_schedule, GanttFormat, ScheduleDoc};
use batchshop::io::{generate_instance, load_instance, serialize_instance, Format, GenSpec};
use batchshop::model::Instance;
use batchshop::policies::{
    curve_csv, evaluate_policy, train_pg, train_q, ExactConfig, Heuristic, Mode, PgHyperparams, PolicyFile, PolicyKind, QHyperparams, Scripted,
};
use batchshop::Error;
use batchshop_service::planner::{plan_candidate, BalancedWeights, Candidate, CandidateStatus, Goal, Resolved};
use batchshop_service::ServiceConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_GUARD: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "batchshop", version, about = "Batch job-shop scheduling: plan, train, evaluate, serve")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance document, and optionally a schedule against it.
    Validate(ValidateArgs),
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Run one or more policies and print their KPIs.
    Plan(PlanArgs),
    /// Train a tabular or neural policy.
    Train(TrainArgs),
    /// Compare policies over seeded rollouts.
    Evaluate(EvaluateArgs),
    /// Render a schedule as SVG or text.
    Gantt(GanttArgs),
    /// Run the HTTP planning service.
    Serve(ServeArgs),
    /// Re-execute a trajectory log and check it reproduces exactly.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Instance file, or `paper3x3` for the bundled example.
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub schedule: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub jobs: usize,
    #[arg(long, default_value_t = 3)]
    pub machines: usize,
    /// Full generator settings as JSON; overrides --jobs and --machines.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Output path (`.json` or `.toml`); TOML on stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GoalArg {
    Makespan,
    Tardiness,
    Balanced,
}

#[derive(Debug, Clone, Args)]
pub struct GoalArgs {
    #[arg(long, value_enum, default_value_t = GoalArg::Makespan)]
    pub goal: GoalArg,
    /// Makespan weight of the balanced goal.
    #[arg(long, default_value_t = 1.0)]
    pub w_makespan: f64,
    /// Tardiness weight of the balanced goal.
    #[arg(long, default_value_t = 1.0)]
    pub w_tardiness: f64,
}

impl GoalArgs {
    fn goal(&self) -> Result<Goal, CliError> {
        let goal = match self.goal {
            GoalArg::Makespan => Goal::Makespan,
            GoalArg::Tardiness => Goal::Tardiness,
            GoalArg::Balanced => Goal::Balanced(BalancedWeights { makespan: self.w_makespan, tardiness: self.w_tardiness }),
        };
        goal.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(goal)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Fcfs,
    Edd,
    Spt,
    Lpt,
    Random,
    Exact,
}

impl PolicyArg {
    fn heuristic(self) -> Option<Heuristic> {
        Some(match self {
            PolicyArg::Fcfs => Heuristic::Fcfs,
            PolicyArg::Edd => Heuristic::Edd,
            PolicyArg::Spt => Heuristic::Spt,
            PolicyArg::Lpt => Heuristic::Lpt,
            PolicyArg::Random => Heuristic::Random,
            PolicyArg::Exact => return None,
        })
    }
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long)]
    pub instance: String,
    /// Built-in policies; repeat or separate with commas.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub policy: Vec<PolicyArg>,
    /// Trained policy files; repeatable.
    #[arg(long)]
    pub policy_file: Vec<PathBuf>,
    #[command(flatten)]
    pub goal: GoalArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Enable pre-setup actions.
    #[arg(long)]
    pub presetup: bool,
    /// Directory for per-policy schedule, Gantt and trajectory files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the KPI table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Largest instance (in operations) exact search accepts.
    #[arg(long, default_value_t = 12)]
    pub exact_max_ops: usize,
    /// Exact search budget in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub exact_budget: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Algo {
    Q,
    Pg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RewardPreset {
    /// Time penalty only; the return is minus the makespan.
    Makespan,
    Tardiness,
    /// Time, tardiness, completion bonus and blocking penalty.
    Dense,
}

#[derive(Debug, Clone, Args)]
pub struct RewardArgs {
    #[arg(long, value_enum, default_value_t = RewardPreset::Makespan)]
    pub reward: RewardPreset,
    #[arg(long)]
    pub w_time: Option<f64>,
    #[arg(long)]
    pub w_tardy: Option<f64>,
    #[arg(long)]
    pub r_complete: Option<f64>,
    #[arg(long)]
    pub w_block: Option<f64>,
    #[arg(long)]
    pub w_deadlock: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

impl RewardArgs {
    fn config(&self) -> Result<RewardConfig, CliError> {
        let mut c = match self.reward {
            RewardPreset::Makespan => RewardConfig::makespan(),
            RewardPreset::Tardiness => RewardConfig::tardiness(),
            RewardPreset::Dense => RewardConfig::default(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.w_time, self.w_time);
        set(&mut c.w_tardy, self.w_tardy);
        set(&mut c.r_complete, self.r_complete);
        set(&mut c.w_block, self.w_block);
        set(&mut c.w_deadlock, self.w_deadlock);
        set(&mut c.gamma, self.gamma);
        c.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long, value_enum)]
    pub algo: Algo,
    #[command(flatten)]
    pub reward: RewardArgs,
    #[arg(long)]
    pub presetup: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Q-learning episodes.
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Policy-gradient updates.
    #[arg(long)]
    pub updates: Option<usize>,
    /// Full hyperparameters as JSON (Q or PG, matching --algo).
    #[arg(long)]
    pub hyperparams: Option<PathBuf>,
    /// Policy file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Learning curve CSV to write.
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Greedy,
    Sample,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub policy: Vec<PolicyArg>,
    #[arg(long)]
    pub policy_file: Vec<PathBuf>,
    #[command(flatten)]
    pub reward: RewardArgs,
    #[arg(long)]
    pub presetup: bool,
    #[arg(long, default_value_t = 100)]
    pub rollouts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How learned policies pick actions.
    #[arg(long, value_enum, default_value_t = ModeArg::Sample)]
    pub mode: ModeArg,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GanttFormatArg {
    Svg,
    Text,
}

#[derive(Debug, Args)]
pub struct GanttArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub schedule: PathBuf,
    #[arg(long, value_enum, default_value_t = GanttFormatArg::Svg)]
    pub format: GanttFormatArg,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "BATCHSHOP_LISTEN", default_value = "127.0.0.1:8080")]
    pub listen: std::net::SocketAddr,
    /// Store directory; in-memory when omitted.
    #[arg(long, env = "BATCHSHOP_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[arg(long, env = "BATCHSHOP_WORKERS")]
    pub workers: Option<usize>,
    /// Exact search budget in seconds.
    #[arg(long, env = "BATCHSHOP_EXACT_BUDGET", default_value_t = 30.0)]
    pub exact_budget: f64,
    #[arg(long, env = "BATCHSHOP_EXACT_MAX_OPS", default_value_t = 12)]
    pub exact_max_ops: usize,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub trajectory: PathBuf,
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    fn invalid(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INVALID, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::GuardExceeded(_) => EXIT_GUARD,
            Error::Parse(_) | Error::InvalidInstance { .. } | Error::InvalidSchedule(_) | Error::Mismatch(_) | Error::UnknownArticle(_) => {
                EXIT_INVALID
            }
            Error::Domain(_) => EXIT_USAGE,
            _ => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

type CliResult = Result<(), CliError>;

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let help = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            if help {
                let _ = write!(out, "{text}");
                return EXIT_OK;
            }
            let _ = write!(err, "{text}");
            return EXIT_USAGE;
        }
    };
    let result = match cli.command {
        Command::Validate(a) => validate(a, out),
        Command::Generate(a) => generate(a, out),
        Command::Plan(a) => plan(a, out, err),
        Command::Train(a) => train(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Gantt(a) => gantt(a, out),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => replay(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message);
            e.code
        }
    }
}

fn load(spec: &str) -> Result<Arc<Instance>, CliError> {
    load_instance(spec).map(Arc::new).map_err(|e| match e {
        Error::Io(io) => CliError::usage(format!("cannot read instance '{spec}': {io}")),
        other => CliError::invalid(format!("instance '{spec}': {other}")),
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> CliResult {
    let fail = |e: std::io::Error| CliError::usage(format!("cannot write {}: {e}", path.display()));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(fail)?;
    }
    std::fs::write(path, contents).map_err(fail)
}

fn load_policy(path: &Path) -> Result<PolicyKind, CliError> {
    let file = PolicyFile::from_json(&read(path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Ok(file.policy)
}

fn validate(a: ValidateArgs, out: &mut dyn Write) -> CliResult {
    let inst = load(&a.instance)?;
    writeln!(
        out,
        "instance OK: {} jobs, {} machines, {} operations, hash {}",
        inst.n_jobs(),
        inst.n_machines(),
        inst.total_ops(),
        &inst.content_hash()[..16]
    )?;
    if let Some(path) = a.schedule {
        let doc = ScheduleDoc::from_json(&read(&path)?).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        let violations = validate_schedule(&inst, &doc.schedule())?;
        if !violations.is_empty() {
            for v in &violations {
                writeln!(out, "  {v}")?;
            }
            return Err(CliError::invalid(format!("schedule has {} violation(s)", violations.len())));
        }
        writeln!(out, "schedule OK: {} intervals", doc.intervals.len())?;
    }
    Ok(())
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> CliResult {
    let spec = match &a.spec {
        Some(path) => {
            let mut spec: GenSpec = serde_json::from_str(&read(path)?).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
            spec.seed = a.seed;
            spec
        }
        None => GenSpec::sized(a.seed, a.jobs, a.machines),
    };
    spec.validate().map_err(|e| CliError::usage(e.to_string()))?;
    let inst = generate_instance(&spec)?;
    match a.out {
        Some(path) => {
            write_file(&path, &serialize_instance(&inst, Format::from_path(&path)))?;
            writeln!(out, "wrote {} ({} jobs, {} machines)", path.display(), inst.n_jobs(), inst.n_machines())?;
        }
        None => write!(out, "{}", serialize_instance(&inst, Format::Toml))?,
    }
    Ok(())
}

/// One row of the KPI table.
#[derive(Debug, Clone, PartialEq)]
pub struct KpiRow {
    pub policy: String,
    pub status: String,
    pub cells: Vec<String>,
}

const KPI_HEADER: [&str; 9] = ["policy", "status", "makespan", "total_tardiness", "tardy_jobs", "setup_time", "completed", "objective", "return"];

fn kpi_row(c: &Candidate) -> KpiRow {
    let status = format!("{:?}", c.status).to_uppercase();
    let cells = match &c.schedule {
        Some(doc) => {
            let k = &doc.kpis;
            vec![
                k.makespan.to_string(),
                k.total_tardiness.to_string(),
                k.tardy_jobs.to_string(),
                k.setup_time_total.to_string(),
                k.completed_jobs.to_string(),
                c.objective.map(|o| o.to_string()).unwrap_or_default(),
                c.total_reward.map(|r| r.to_string()).unwrap_or_default(),
            ]
        }
        None => vec![String::new(); KPI_HEADER.len() - 2],
    };
    KpiRow { policy: c.policy.clone(), status, cells }
}

/// Column-aligned text table.
fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut s = String::new();
    let line = |s: &mut String, cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        writeln!(s, "{}", parts.join("  ").trim_end()).unwrap();
    };
    line(&mut s, header.to_vec());
    for row in rows {
        line(&mut s, row.iter().map(String::as_str).collect());
    }
    s
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let quote = |c: &str| if c.contains([',', '"', '\n']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c.to_string() };
    let mut s = header.join(",") + "\n";
    for row in rows {
        s += &row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(",");
        s.push('\n');
    }
    s
}

fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c.to_ascii_lowercase() } else { '_' }).collect()
}

fn plan(a: PlanArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult {
    if a.policy.is_empty() && a.policy_file.is_empty() {
        return Err(CliError::usage("give at least one --policy or --policy-file"));
    }
    if !(a.exact_budget.is_finite() && a.exact_budget > 0.0) {
        return Err(CliError::usage("--exact-budget must be a positive number of seconds"));
    }
    let goal = a.goal.goal()?;
    let features = Features { presetup: a.presetup };
    let inst = load(&a.instance)?;
    let mut policies = Vec::new();
    for p in &a.policy {
        match p.heuristic() {
            Some(h) => policies.push(Resolved::Rollout { label: PolicyKind::heuristic(h).label().to_string(), policy: PolicyKind::heuristic(h) }),
            None => {
                if inst.total_ops() > a.exact_max_ops {
                    return Err(CliError {
                        code: EXIT_GUARD,
                        message: format!("exact search is limited to {} operations; this instance has {}", a.exact_max_ops, inst.total_ops()),
                    });
                }
                policies.push(Resolved::Exact);
            }
        }
    }
    for path in &a.policy_file {
        let policy = load_policy(path)?;
        policy.check_compatible(&inst, features)?;
        let label = format!("{}:{}", policy.label(), path.file_stem().and_then(|s| s.to_str()).unwrap_or("policy"));
        policies.push(Resolved::Rollout { label, policy });
    }
    let env = Env::new(inst.clone(), goal.reward(), features)?;
    let exact = ExactConfig { time_budget: Some(Duration::from_secs_f64(a.exact_budget)), ..ExactConfig::default() };
    let candidates: Vec<Candidate> = policies.iter().map(|p| plan_candidate(&env, p, goal, a.seed, &exact)).collect();

    let rows: Vec<Vec<String>> = candidates
        .iter()
        .map(|c| {
            let r = kpi_row(c);
            [vec![r.policy, r.status], r.cells].concat()
        })
        .collect();
    write!(out, "{}", aligned(&KPI_HEADER, &rows))?;
    if let Some(path) = &a.csv {
        write_file(path, &csv_table(&KPI_HEADER, &rows))?;
    }
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        for c in candidates.iter().filter(|c| c.is_servable()) {
            let doc = c.schedule.as_ref().expect("servable candidates carry a schedule");
            let stem = file_stem(&c.policy);
            write_file(&dir.join(format!("{stem}.schedule.json")), &doc.to_json())?;
            write_file(&dir.join(format!("{stem}.gantt.svg")), &render_gantt(&inst, &doc.schedule(), GanttFormat::Svg))?;
            let run = rollout(env.clone(), &mut Scripted::new(c.actions.clone()), a.seed)?;
            let mut log = Vec::new();
            write_trajectory(&mut log, &TrajectoryHeader::new(&inst, *env.config(), features), &run.trajectory)?;
            std::fs::write(dir.join(format!("{stem}.trajectory.jsonl")), log)?;
        }
    }
    let mut code = EXIT_OK;
    for c in &candidates {
        match c.status {
            CandidateStatus::Failed => {
                writeln!(err, "{}: {}", c.policy, c.message.as_deref().unwrap_or("failed"))?;
                code = code.max(EXIT_INVALID);
            }
            CandidateStatus::GuardExceeded => {
                writeln!(err, "{}: {}", c.policy, c.message.as_deref().unwrap_or("guard exceeded"))?;
                code = code.max(EXIT_GUARD);
            }
            CandidateStatus::Deadlocked => writeln!(err, "{}: {}", c.policy, c.message.as_deref().unwrap_or("deadlock"))?,
            CandidateStatus::Ready => {}
        }
    }
    match code {
        EXIT_OK => Ok(()),
        code => Err(CliError { code, message: "some policies produced no valid schedule".into() }),
    }
}

fn read_hyperparams<T: serde::de::DeserializeOwned>(path: &Option<PathBuf>) -> Result<Option<T>, CliError> {
    match path {
        Some(p) => serde_json::from_str(&read(p)?).map(Some).map_err(|e| CliError::usage(format!("{}: {e}", p.display()))),
        None => Ok(None),
    }
}

fn train(a: TrainArgs, out: &mut dyn Write) -> CliResult {
    let reward = a.reward.config()?;
    let features = Features { presetup: a.presetup };
    let (policy, curve) = match a.algo {
        Algo::Q => {
            let mut hp: QHyperparams = read_hyperparams(&a.hyperparams)?.unwrap_or_default();
            hp.seed = a.seed;
            if let Some(e) = a.episodes {
                hp.episodes = e;
            }
            hp.validate().map_err(|e| CliError::usage(e.to_string()))?;
            let inst = load(&a.instance)?;
            let t = train_q(inst, reward, features, &hp)?;
            (PolicyKind::TabularQ { table: t.table }, t.curve)
        }
        Algo::Pg => {
            let mut hp: PgHyperparams = read_hyperparams(&a.hyperparams)?.unwrap_or_default();
            hp.seed = a.seed;
            if let Some(u) = a.updates {
                hp.updates = u;
            }
            hp.validate().map_err(|e| CliError::usage(e.to_string()))?;
            let inst = load(&a.instance)?;
            let t = train_pg(inst, reward, features, &hp)?;
            (PolicyKind::Neural { params: t.policy }, t.curve)
        }
    };
    write_file(&a.out, &PolicyFile::new(policy.clone()).to_json())?;
    if let Some(path) = &a.curve {
        write_file(path, &curve_csv(&curve))?;
    }
    let last = curve.last().map(|p| format!(", last episode makespan {}", p.makespan)).unwrap_or_default();
    writeln!(out, "trained {} policy over {} episodes{last}; wrote {}", policy.label(), curve.len(), a.out.display())?;
    Ok(())
}

const EVAL_HEADER: [&str; 6] = ["policy", "rollouts", "mean_makespan", "best_makespan", "mean_return", "deadlocks"];

fn evaluate(a: EvaluateArgs, out: &mut dyn Write) -> CliResult {
    if a.policy.is_empty() && a.policy_file.is_empty() {
        return Err(CliError::usage("give at least one --policy or --policy-file"));
    }
    if a.rollouts == 0 {
        return Err(CliError::usage("--rollouts must be at least 1"));
    }
    if a.policy.contains(&PolicyArg::Exact) {
        return Err(CliError::usage("EXACT is a planner, not a rollout policy; use `plan --policy exact`"));
    }
    let reward = a.reward.config()?;
    let features = Features { presetup: a.presetup };
    let mode = match a.mode {
        ModeArg::Greedy => Mode::Greedy,
        ModeArg::Sample => Mode::Sample,
    };
    let inst = load(&a.instance)?;
    let mut policies: Vec<(String, PolicyKind)> =
        a.policy.iter().filter_map(|p| p.heuristic()).map(|h| (PolicyKind::heuristic(h).label().to_string(), PolicyKind::heuristic(h))).collect();
    for path in &a.policy_file {
        let p = load_policy(path)?;
        let label = format!("{}:{}", p.label(), path.file_stem().and_then(|s| s.to_str()).unwrap_or("policy"));
        policies.push((label, p));
    }
    let mut rows = Vec::new();
    for (label, policy) in &policies {
        let e = evaluate_policy(inst.clone(), policy, reward, features, mode, a.rollouts, a.seed)?;
        rows.push(vec![
            label.clone(),
            a.rollouts.to_string(),
            format!("{:.3}", e.mean_makespan()),
            e.best_makespan().to_string(),
            format!("{:.3}", e.mean_return()),
            e.deadlocks.to_string(),
        ]);
    }
    write!(out, "{}", aligned(&EVAL_HEADER, &rows))?;
    if let Some(path) = &a.csv {
        write_file(path, &csv_table(&EVAL_HEADER, &rows))?;
    }
    Ok(())
}

fn gantt(a: GanttArgs, out: &mut dyn Write) -> CliResult {
    let inst = load(&a.instance)?;
    let doc = ScheduleDoc::from_json(&read(&a.schedule)?).map_err(|e| CliError::invalid(format!("{}: {e}", a.schedule.display())))?;
    let format = match a.format {
        GanttFormatArg::Svg => GanttFormat::Svg,
        GanttFormatArg::Text => GanttFormat::Text,
    };
    let rendered = render_gantt(&inst, &doc.schedule(), format);
    match a.out {
        Some(path) => write_file(&path, &rendered)?,
        None => write!(out, "{rendered}")?,
    }
    Ok(())
}

fn serve(a: ServeArgs) -> CliResult {
    if !(a.exact_budget.is_finite() && a.exact_budget > 0.0) {
        return Err(CliError::usage("--exact-budget must be a positive number of seconds"));
    }
    let defaults = ServiceConfig::default();
    let config = ServiceConfig {
        listen: a.listen,
        data_dir: a.data_dir,
        workers: a.workers.unwrap_or(defaults.workers).max(1),
        exact_budget: Duration::from_secs_f64(a.exact_budget),
        exact_max_ops: a.exact_max_ops,
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(batchshop_service::serve(config))?;
    Ok(())
}

fn replay(a: ReplayArgs, out: &mut dyn Write) -> CliResult {
    let inst = load(&a.instance)?;
    let file = std::fs::File::open(&a.trajectory).map_err(|e| CliError::usage(format!("cannot read {}: {e}", a.trajectory.display())))?;
    let (header, records) = read_trajectory(BufReader::new(file))?;
    let env = replay_trajectory(inst, &header, &records)?;
    writeln!(
        out,
        "replayed {} steps: observations and rewards identical; t={}, done={}",
        records.len(),
        env.clock(),
        env.is_done()
    )?;
    Ok(())
}
