//! Exhaustive search over assignment and no-op decisions with memoization on
//! the canonical state key.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, Features, RewardConfig};
use crate::error::{Error, Result};
use crate::eval::{Kpis, Schedule};
use crate::model::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Objective {
    Makespan,
    TotalTardiness,
    /// `makespan * makespan_weight + tardiness * tardiness_weight`.
    Weighted { makespan: f64, tardiness: f64 },
}

impl Objective {
    fn weights(self) -> (f64, f64) {
        match self {
            Objective::Makespan => (1.0, 0.0),
            Objective::TotalTardiness => (0.0, 1.0),
            Objective::Weighted { makespan, tardiness } => (makespan, tardiness),
        }
    }

    pub fn evaluate(self, kpis: &Kpis) -> f64 {
        let (wm, wt) = self.weights();
        wm * kpis.makespan + wt * kpis.total_tardiness
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactConfig {
    /// Distinct states expanded before giving up.
    pub node_limit: usize,
    pub time_budget: Option<Duration>,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig { node_limit: 10_000_000, time_budget: None }
    }
}

#[derive(Debug, Clone)]
pub struct ExactResult {
    pub value: f64,
    pub actions: Vec<Action>,
    pub schedule: Schedule,
    pub kpis: Kpis,
    pub nodes: usize,
}

struct Search {
    objective: Objective,
    config: ExactConfig,
    started: Instant,
    memo: HashMap<Vec<i64>, (f64, Option<Action>)>,
    nodes: usize,
}

impl Search {
    fn key(&self, env: &Env) -> Vec<i64> {
        let mut key = env.state().canonical_key();
        if self.objective.weights().1 != 0.0 {
            // deadlines make the future depend on absolute time
            key.push((env.clock() * 1e6).round() as i64);
        }
        key
    }

    fn measure(&self, env: &Env) -> f64 {
        let (wm, wt) = self.objective.weights();
        wm * env.clock() + wt * env.state().stats.total_tardiness
    }

    fn terminal(&self, env: &Env) -> f64 {
        if env.state().deadlocked {
            return f64::INFINITY;
        }
        self.objective.weights().0 * (env.kpis().makespan - env.clock()).max(0.0)
    }

    fn branches(env: &Env) -> Vec<Action> {
        let mask = env.eligible_actions();
        let space = env.action_space();
        (0..=space.noop_index()).filter(|&i| mask[i]).filter_map(|i| space.action(i)).collect()
    }

    /// Best achievable additional cost from `env`.
    fn solve(&mut self, env: &Env) -> Result<f64> {
        if env.is_done() {
            return Ok(self.terminal(env));
        }
        let key = self.key(env);
        if let Some(&(v, _)) = self.memo.get(&key) {
            return Ok(v);
        }
        self.nodes += 1;
        if self.nodes > self.config.node_limit {
            return Err(Error::GuardExceeded(format!("instance too large for exact search: more than {} states", self.config.node_limit)));
        }
        if self.nodes % 4096 == 0 {
            if let Some(budget) = self.config.time_budget {
                if self.started.elapsed() > budget {
                    return Err(Error::GuardExceeded(format!("instance too large for exact search: over the {budget:?} budget")));
                }
            }
        }
        let base = self.measure(env);
        let mut best = (f64::INFINITY, None);
        for action in Self::branches(env) {
            let mut child = env.clone();
            child.step(action)?;
            let v = self.measure(&child) - base + self.solve(&child)?;
            if v < best.0 - 1e-9 {
                best = (v, Some(action));
            }
        }
        self.memo.insert(key, best);
        Ok(best.0)
    }
}

/// Optimal schedule for a fresh episode of `instance`.
pub fn brute_force_optimal(instance: Arc<Instance>, objective: Objective, config: ExactConfig) -> Result<ExactResult> {
    let env = Env::new(instance, RewardConfig::makespan(), Features::default())?;
    brute_force_from(env, objective, config)
}

/// Optimal completion of the episode in `env`. Pre-setup actions are not
/// explored even when the feature is enabled.
pub fn brute_force_from(env: Env, objective: Objective, config: ExactConfig) -> Result<ExactResult> {
    let mut search = Search { objective, config, started: Instant::now(), memo: HashMap::new(), nodes: 0 };
    let value = search.solve(&env)?;
    if !value.is_finite() {
        return Err(Error::domain("every completion deadlocks"));
    }
    let mut env = env;
    let mut actions = Vec::new();
    while !env.is_done() {
        let key = search.key(&env);
        let action = search.memo.get(&key).and_then(|&(_, a)| a).ok_or_else(|| Error::domain("search table incomplete"))?;
        env.step(action)?;
        actions.push(action);
    }
    let kpis = env.kpis();
    let value = objective.evaluate(&kpis);
    Ok(ExactResult { value, actions, schedule: env.schedule(), kpis, nodes: search.nodes })
}
