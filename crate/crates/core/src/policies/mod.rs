//! Action selection: dispatching rules, exhaustive search, tabular
//! Q-learning and a clipped-surrogate actor-critic.

mod exact;
mod heuristics;
pub mod pg;
mod qlearn;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use exact::{brute_force_from, brute_force_optimal, ExactConfig, ExactResult, Objective};
pub use heuristics::{heuristic_select, next_op_time, Heuristic};
pub use pg::{train_pg, ActorCritic, PgHyperparams, PgTraining};
pub use qlearn::{train_q, QHyperparams, QTable, QTraining};

use std::sync::Arc;

use crate::env::{rollout, Action, Env, Features, RewardConfig};
use crate::error::{Error, Result};
use crate::model::Instance;

/// Anything that can drive an [`Env`] episode.
pub trait ActionSelector {
    fn name(&self) -> String;
    fn select(&mut self, env: &Env, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<Action>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Greedy,
    Sample,
}

/// Shape a learned policy was trained for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub n_jobs: usize,
    pub n_machines: usize,
    pub setup_counts: Vec<usize>,
    pub action_count: usize,
}

impl PolicyShape {
    pub fn of(instance: &Instance, features: Features) -> Self {
        PolicyShape {
            n_jobs: instance.n_jobs(),
            n_machines: instance.n_machines(),
            setup_counts: instance.machines.iter().map(|m| m.setup_count()).collect(),
            action_count: crate::env::ActionSpace::new(instance, features).len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicyKind {
    Random,
    Fcfs,
    Edd,
    Spt,
    Lpt,
    TabularQ { table: QTable },
    Neural { params: ActorCritic },
}

impl PolicyKind {
    pub fn heuristic(h: Heuristic) -> Self {
        match h {
            Heuristic::Random => PolicyKind::Random,
            Heuristic::Fcfs => PolicyKind::Fcfs,
            Heuristic::Edd => PolicyKind::Edd,
            Heuristic::Spt => PolicyKind::Spt,
            Heuristic::Lpt => PolicyKind::Lpt,
        }
    }

    pub fn as_heuristic(&self) -> Option<Heuristic> {
        Some(match self {
            PolicyKind::Random => Heuristic::Random,
            PolicyKind::Fcfs => Heuristic::Fcfs,
            PolicyKind::Edd => Heuristic::Edd,
            PolicyKind::Spt => Heuristic::Spt,
            PolicyKind::Lpt => Heuristic::Lpt,
            _ => return None,
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolicyKind::Random => "RANDOM",
            PolicyKind::Fcfs => "FCFS",
            PolicyKind::Edd => "EDD",
            PolicyKind::Spt => "SPT",
            PolicyKind::Lpt => "LPT",
            PolicyKind::TabularQ { .. } => "TABULAR_Q",
            PolicyKind::Neural { .. } => "NEURAL",
        }
    }

    pub fn shape(&self) -> Option<&PolicyShape> {
        match self {
            PolicyKind::TabularQ { table } => Some(&table.shape),
            PolicyKind::Neural { params } => Some(&params.shape),
            _ => None,
        }
    }

    /// Learned policies only run on instances of the shape they were trained on.
    pub fn check_compatible(&self, instance: &Instance, features: Features) -> Result<()> {
        match self.shape() {
            Some(shape) if *shape != PolicyShape::of(instance, features) => Err(Error::Mismatch(format!(
                "policy/instance incompatible: policy expects {} jobs x {} machines with {} actions",
                shape.n_jobs, shape.n_machines, shape.action_count
            ))),
            _ => Ok(()),
        }
    }
}

/// Picks an eligible action. `Greedy` is deterministic; `Sample` draws from `rng`.
pub fn policy_act(policy: &PolicyKind, env: &Env, mask: &[bool], mode: Mode, rng: &mut ChaCha8Rng) -> Result<Action> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::EmptyMask);
    }
    let index = match policy {
        PolicyKind::TabularQ { table } => table.greedy(&env.state().canonical_key(), mask),
        PolicyKind::Neural { params } => {
            let probs = params.action_probs(env, mask);
            match mode {
                Mode::Greedy => argmax_lowest(&probs, mask),
                Mode::Sample => sample_index(&probs, mask, rng),
            }
        }
        other => {
            let h = other.as_heuristic().expect("remaining kinds are heuristics");
            return heuristic_select(h, env, mask, rng);
        }
    };
    env.action_space().action(index).ok_or(Error::EmptyMask)
}

pub(crate) fn argmax_lowest(values: &[f64], mask: &[bool]) -> usize {
    let mut best: Option<usize> = None;
    for (i, (&v, &ok)) in values.iter().zip(mask).enumerate() {
        if ok && best.is_none_or(|b| v > values[b]) {
            best = Some(i);
        }
    }
    best.expect("mask has an eligible entry")
}

pub(crate) fn sample_index(probs: &[f64], mask: &[bool], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = None;
    for (i, (&p, &ok)) in probs.iter().zip(mask).enumerate() {
        if !ok || p <= 0.0 {
            continue;
        }
        acc += p;
        last = Some(i);
        if u < acc {
            return i;
        }
    }
    last.unwrap_or_else(|| argmax_lowest(probs, mask))
}

/// A policy plus the mode it acts in.
#[derive(Debug, Clone)]
pub struct Agent {
    pub policy: PolicyKind,
    pub mode: Mode,
}

impl Agent {
    pub fn new(policy: PolicyKind, mode: Mode) -> Self {
        Agent { policy, mode }
    }

    pub fn greedy(policy: PolicyKind) -> Self {
        Agent { policy, mode: Mode::Greedy }
    }
}

impl ActionSelector for Agent {
    fn name(&self) -> String {
        self.policy.label().to_string()
    }

    fn select(&mut self, env: &Env, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<Action> {
        policy_act(&self.policy, env, mask, self.mode, rng)
    }
}

/// Replays a fixed action list.
#[derive(Debug, Clone)]
pub struct Scripted {
    actions: std::vec::IntoIter<Action>,
}

impl Scripted {
    pub fn new(actions: Vec<Action>) -> Self {
        Scripted { actions: actions.into_iter() }
    }
}

impl ActionSelector for Scripted {
    fn name(&self) -> String {
        "SCRIPTED".into()
    }

    fn select(&mut self, _env: &Env, _mask: &[bool], _rng: &mut ChaCha8Rng) -> Result<Action> {
        self.actions.next().ok_or_else(|| Error::domain("script ran out of actions"))
    }
}

/// Makespans and returns of repeated rollouts from the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub policy: String,
    pub makespans: Vec<f64>,
    pub returns: Vec<f64>,
    pub deadlocks: usize,
}

impl Evaluation {
    pub fn mean_makespan(&self) -> f64 {
        self.makespans.iter().sum::<f64>() / self.makespans.len().max(1) as f64
    }

    pub fn mean_return(&self) -> f64 {
        self.returns.iter().sum::<f64>() / self.returns.len().max(1) as f64
    }

    pub fn best_makespan(&self) -> f64 {
        self.makespans.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs `rollouts` episodes; episode `i` uses seed `seed + i`.
pub fn evaluate_policy(
    instance: Arc<Instance>,
    policy: &PolicyKind,
    reward: RewardConfig,
    features: Features,
    mode: Mode,
    rollouts: usize,
    seed: u64,
) -> Result<Evaluation> {
    policy.check_compatible(&instance, features)?;
    let env = Env::new(instance, reward, features)?;
    let mut eval = Evaluation { policy: policy.label().to_string(), makespans: Vec::new(), returns: Vec::new(), deadlocks: 0 };
    let mut agent = Agent::new(policy.clone(), mode);
    for i in 0..rollouts {
        let r = rollout(env.clone(), &mut agent, seed.wrapping_add(i as u64))?;
        eval.deadlocks += r.deadlocked as usize;
        eval.returns.push(r.total_reward());
        eval.makespans.push(r.kpis.makespan);
    }
    Ok(eval)
}

pub const POLICY_FORMAT: &str = "batchshop-policy";

/// Versioned policy file: a kind tag plus table or parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub policy: PolicyKind,
}

impl PolicyFile {
    pub fn new(policy: PolicyKind) -> Self {
        PolicyFile { format: POLICY_FORMAT.to_string(), version: 1, policy }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("policy serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: PolicyFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if f.format != POLICY_FORMAT || f.version != 1 {
            return Err(Error::Parse(format!("unsupported policy file {} v{}", f.format, f.version)));
        }
        Ok(f)
    }
}

/// One row of a training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub episode: usize,
    #[serde(rename = "return")]
    pub ret: f64,
    pub makespan: f64,
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in curve {
        w.serialize(p).expect("curve rows serialize");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}
