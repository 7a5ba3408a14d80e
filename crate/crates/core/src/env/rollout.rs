use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Env, Observation, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::eval::{Kpis, Schedule};
use crate::policies::ActionSelector;

/// Step budget per operation before a rollout is considered runaway.
pub const MAX_STEPS_PER_OP: usize = 64;

#[derive(Debug, Clone)]
pub struct Rollout {
    pub schedule: Schedule,
    pub trajectory: Vec<TrajectoryRecord>,
    pub kpis: Kpis,
    pub final_observation: Observation,
    pub deadlocked: bool,
}

impl Rollout {
    pub fn rewards(&self) -> Vec<f64> {
        self.trajectory.iter().map(|r| r.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.trajectory.iter().map(|r| r.reward).sum()
    }
}

/// Runs `policy` from the current state of `env` until the episode ends.
pub fn rollout(mut env: Env, policy: &mut dyn ActionSelector, seed: u64) -> Result<Rollout> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let limit = 1_000 + MAX_STEPS_PER_OP * env.instance().total_ops();
    let mut trajectory = Vec::new();
    let mut observation = env.observe();
    let mut step = 0;
    while !env.is_done() {
        if step >= limit {
            return Err(Error::GuardExceeded(format!("rollout exceeded {limit} steps")));
        }
        let mask = env.eligible_actions();
        let action = policy.select(&env, &mask, &mut rng)?;
        let clock = env.clock();
        let result = env.step(action).map_err(|e| match e {
            Error::MaskedAction { action, reason } => Error::MaskedAction {
                action,
                reason: format!("policy '{}' chose it at step {step}, t={clock}: {reason}", policy.name()),
            },
            other => other,
        })?;
        trajectory.push(TrajectoryRecord { step, clock, action, reward: result.reward, observation });
        observation = result.observation;
        step += 1;
    }
    Ok(Rollout {
        schedule: env.schedule(),
        trajectory,
        kpis: env.kpis(),
        final_observation: observation,
        deadlocked: env.state().deadlocked,
    })
}
