//! Candidate schedule computation. Pure and synchronous; the HTTP layer
//! runs it on the worker pool and the CLI calls it directly.

use std::sync::Arc;

use batchshop::env::{rollout, Action, Env, Features, RewardConfig};
use batchshop::eval::{compute_kpis, validate_schedule, Schedule, ScheduleDoc};
use batchshop::model::{Instance, TIME_EPS};
use batchshop::policies::{brute_force_from, Agent, ExactConfig, Objective, PolicyKind, Scripted};
use batchshop::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalancedWeights {
    pub makespan: f64,
    pub tardiness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Goal {
    Makespan,
    Tardiness,
    Balanced(BalancedWeights),
}

impl Default for Goal {
    fn default() -> Self {
        Goal::Makespan
    }
}

impl Goal {
    pub fn validate(&self) -> Result<()> {
        if let Goal::Balanced(w) = self {
            let ok = |x: f64| x.is_finite() && x >= 0.0;
            if !ok(w.makespan) || !ok(w.tardiness) || w.makespan + w.tardiness <= 0.0 {
                return Err(Error::domain("balanced weights must be finite, >= 0 and not both zero"));
            }
        }
        Ok(())
    }

    /// Undiscounted reward whose return is minus the goal's objective.
    pub fn reward(&self) -> RewardConfig {
        match *self {
            Goal::Makespan => RewardConfig::makespan(),
            Goal::Tardiness => RewardConfig::tardiness(),
            Goal::Balanced(w) => RewardConfig { w_time: w.makespan, w_tardy: w.tardiness, ..RewardConfig::makespan() },
        }
    }

    pub fn objective(&self) -> Objective {
        match *self {
            Goal::Makespan => Objective::Makespan,
            Goal::Tardiness => Objective::TotalTardiness,
            Goal::Balanced(w) => Objective::Weighted { makespan: w.makespan, tardiness: w.tardiness },
        }
    }
}

/// Policy names accepted by plan requests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PolicySpec {
    Fcfs,
    Edd,
    Spt,
    Lpt,
    Random,
    Exact,
    /// A stored learned policy, by id.
    Trained(String),
}

impl PolicySpec {
    pub fn label(&self) -> String {
        match self {
            PolicySpec::Fcfs => "FCFS".into(),
            PolicySpec::Edd => "EDD".into(),
            PolicySpec::Spt => "SPT".into(),
            PolicySpec::Lpt => "LPT".into(),
            PolicySpec::Random => "RANDOM".into(),
            PolicySpec::Exact => "EXACT".into(),
            PolicySpec::Trained(id) => format!("TRAINED:{id}"),
        }
    }

    pub fn heuristic(&self) -> Option<PolicyKind> {
        Some(match self {
            PolicySpec::Fcfs => PolicyKind::Fcfs,
            PolicySpec::Edd => PolicyKind::Edd,
            PolicySpec::Spt => PolicyKind::Spt,
            PolicySpec::Lpt => PolicyKind::Lpt,
            PolicySpec::Random => PolicyKind::Random,
            _ => return None,
        })
    }
}

/// What actually runs for one candidate.
#[derive(Debug, Clone)]
pub enum Resolved {
    Rollout { label: String, policy: PolicyKind },
    Exact,
}

impl Resolved {
    pub fn label(&self) -> String {
        match self {
            Resolved::Rollout { label, .. } => label.clone(),
            Resolved::Exact => "EXACT".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CandidateStatus {
    Ready,
    Deadlocked,
    GuardExceeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub policy: String,
    pub status: CandidateStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Served only after a clean validation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleDoc>,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_reward: Option<f64>,
    /// Goal objective of the schedule (lower is better).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gantt: Option<String>,
}

impl Candidate {
    fn failed(policy: String, status: CandidateStatus, message: String) -> Self {
        Candidate { policy, status, message: Some(message), schedule: None, actions: Vec::new(), total_reward: None, objective: None, gantt: None }
    }

    pub fn is_servable(&self) -> bool {
        matches!(self.status, CandidateStatus::Ready | CandidateStatus::Deadlocked) && self.schedule.is_some()
    }
}

/// Runs one candidate from the current state of `env`. Errors become a
/// candidate status instead of failing the whole plan.
pub fn plan_candidate(env: &Env, policy: &Resolved, goal: Goal, seed: u64, exact: &ExactConfig) -> Candidate {
    let label = policy.label();
    let outcome = match policy {
        Resolved::Rollout { policy, .. } => rollout(env.clone(), &mut Agent::greedy(policy.clone()), seed),
        Resolved::Exact => brute_force_from(env.clone(), goal.objective(), *exact)
            .and_then(|r| rollout(env.clone(), &mut Scripted::new(r.actions), seed)),
    };
    let run = match outcome {
        Ok(run) => run,
        Err(Error::GuardExceeded(msg)) => return Candidate::failed(label, CandidateStatus::GuardExceeded, msg),
        Err(e) => return Candidate::failed(label, CandidateStatus::Failed, e.to_string()),
    };
    let instance = env.instance();
    match validate_schedule(instance, &run.schedule) {
        Ok(v) if v.is_empty() => {}
        Ok(v) => {
            let detail = v.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            return Candidate::failed(label, CandidateStatus::Failed, format!("schedule failed validation: {detail}"));
        }
        Err(e) => return Candidate::failed(label, CandidateStatus::Failed, e.to_string()),
    }
    let kpis = match compute_kpis(instance, &run.schedule) {
        Ok(k) => k,
        Err(e) => return Candidate::failed(label, CandidateStatus::Failed, e.to_string()),
    };
    let objective = goal.objective().evaluate(&kpis);
    let (status, message) = if run.deadlocked {
        (CandidateStatus::Deadlocked, Some(format!("deadlock at t={}", run.kpis.makespan)))
    } else {
        (CandidateStatus::Ready, None)
    };
    Candidate {
        policy: label,
        status,
        message,
        total_reward: Some(run.total_reward()),
        actions: run.trajectory.iter().map(|r| r.action).collect(),
        schedule: Some(ScheduleDoc::new(&run.schedule, kpis)),
        objective: Some(objective),
        gantt: None,
    }
}

/// Re-applies `actions` up to `clock`: decisions taken strictly before the
/// clock and advances to events at or before it. Returns how many were applied.
pub fn replay_to_clock(env: &mut Env, actions: &[Action], clock: f64) -> Result<usize> {
    let eps = TIME_EPS * clock.abs().max(1.0);
    for (i, &action) in actions.iter().enumerate() {
        if env.is_done() {
            return Ok(i);
        }
        let apply = match action {
            Action::Noop => env.state().next_event_time().is_some_and(|t| t <= clock + eps),
            _ => env.clock() < clock - eps,
        };
        if !apply {
            return Ok(i);
        }
        env.step(action)?;
    }
    Ok(actions.len())
}

/// Recovers the decision sequence that produces `schedule`. Fails when the
/// schedule dispatches work at a moment the environment has no decision
/// epoch, since such a schedule cannot be resumed mid-way.
pub fn actions_from_schedule(instance: Arc<Instance>, schedule: &Schedule, features: Features) -> Result<Vec<Action>> {
    let n = instance.n_jobs();
    let mut env = Env::new(instance.clone(), RewardConfig::pure_time(), features)?;
    let dispatch: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..instance.jobs[j].ops.len()).filter_map(|o| schedule.op_timing(j, o).map(|t| t.dispatch)).collect())
        .collect();
    let presetups: Vec<(f64, usize, batchshop::SetupId)> = schedule
        .intervals
        .iter()
        .filter(|iv| iv.job.is_none())
        .map(|iv| (iv.start, iv.machine, iv.setup))
        .collect();
    let unreplayable = |what: String| Error::Mismatch(format!("schedule cannot be replayed: {what}"));
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-6 * a.abs().max(1.0);
    let mut actions = Vec::new();
    let mut guard = 0usize;
    while !env.is_done() {
        guard += 1;
        if guard > 10_000 + 64 * instance.total_ops() {
            return Err(unreplayable("too many steps".into()));
        }
        let now = env.clock();
        let mut progressed = false;
        for &(t, machine, setup) in &presetups {
            let action = Action::Presetup { machine, setup };
            if close(t, now) && env.check_action(action).is_ok() && !actions.contains(&action) {
                env.step(action)?;
                actions.push(action);
                progressed = true;
            }
        }
        for (j, times) in dispatch.iter().enumerate() {
            let next = env.state().jobs[j].next_op;
            if times.get(next).is_some_and(|&t| close(t, now)) && env.check_action(Action::Assign { job: j }).is_ok() {
                env.step(Action::Assign { job: j })?;
                actions.push(Action::Assign { job: j });
                progressed = true;
            }
        }
        if progressed || env.is_done() {
            continue;
        }
        if env.check_action(Action::Noop).is_err() {
            return Err(unreplayable(format!("nothing can happen at t={now}")));
        }
        env.step(Action::Noop)?;
        actions.push(Action::Noop);
    }
    let produced = env.schedule();
    let same = produced.completion.len() == schedule.completion.len()
        && produced.completion.iter().zip(&schedule.completion).all(|(a, b)| match (a, b) {
            (Some(a), Some(b)) => close(*a, *b),
            (None, None) => true,
            _ => false,
        });
    if !same {
        return Err(unreplayable("it does not follow the environment's dispatch rules".into()));
    }
    Ok(actions)
}
