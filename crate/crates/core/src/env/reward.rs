use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weights of the dense reward signal.
///
/// Every clock advance costs `w_time` per minute, each machine held by a
/// finished-but-undispatched job costs `w_block` per minute, each completed
/// job earns `r_complete` minus `w_tardy` per minute late, and reaching a
/// deadlock costs `w_deadlock` once.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    pub w_time: f64,
    pub w_tardy: f64,
    pub r_complete: f64,
    pub w_block: f64,
    pub w_deadlock: f64,
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig { w_time: 1.0, w_tardy: 5.0, r_complete: 10.0, w_block: 2.0, w_deadlock: 1000.0, gamma: 0.99 }
    }
}

impl RewardConfig {
    /// Pure time penalty: the undiscounted return of a finished episode is
    /// minus its makespan.
    pub fn makespan() -> Self {
        RewardConfig { w_time: 1.0, w_tardy: 0.0, r_complete: 0.0, w_block: 0.0, w_deadlock: 1000.0, gamma: 1.0 }
    }

    pub fn pure_time() -> Self {
        RewardConfig { w_deadlock: 0.0, ..Self::makespan() }
    }

    pub fn tardiness() -> Self {
        RewardConfig { w_time: 0.0, w_tardy: 1.0, r_complete: 0.0, w_block: 0.0, w_deadlock: 1000.0, gamma: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_time, self.w_tardy, self.r_complete, self.w_block, self.w_deadlock, self.gamma];
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("reward weights must be finite"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::domain(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if self.w_time < 0.0 || self.w_tardy < 0.0 {
            return Err(Error::domain("time and tardiness weights must be >= 0"));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        RewardConfig {
            w_time: self.w_time * c,
            w_tardy: self.w_tardy * c,
            r_complete: self.r_complete * c,
            w_block: self.w_block * c,
            w_deadlock: self.w_deadlock * c,
            gamma: self.gamma,
        }
    }

    pub(crate) fn advance_reward(&self, dt: f64, blocked_minutes: f64, completed: usize, tardiness: f64) -> f64 {
        -self.w_time * dt - self.w_block * blocked_minutes + self.r_complete * completed as f64 - self.w_tardy * tardiness
    }
}

/// `sum_t gamma^t * r_t`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc)
}
