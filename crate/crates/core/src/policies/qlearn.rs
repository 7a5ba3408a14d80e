//! Tabular Q-learning keyed by the canonical state.

use std::collections::HashMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_lowest, CurvePoint, PolicyShape};
use crate::env::{Env, Features, RewardConfig};
use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QHyperparams {
    pub episodes: usize,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Episodes over which epsilon decays linearly.
    pub epsilon_decay: usize,
    pub seed: u64,
    /// Refuse to grow the table past this many states.
    pub max_states: usize,
}

impl Default for QHyperparams {
    fn default() -> Self {
        QHyperparams {
            episodes: 5000,
            alpha: 0.5,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 3000,
            seed: 0,
            max_states: 1_000_000,
        }
    }
}

impl QHyperparams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        for (name, e) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {e}")));
            }
        }
        if self.episodes == 0 {
            return Err(Error::domain("episodes must be >= 1"));
        }
        Ok(())
    }

    fn epsilon(&self, episode: usize) -> f64 {
        if self.epsilon_decay == 0 {
            return self.epsilon_end;
        }
        let f = (episode as f64 / self.epsilon_decay as f64).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * f
    }
}

/// Action values per visited state. Unvisited entries read as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub shape: PolicyShape,
    #[serde(with = "entries")]
    pub values: HashMap<Vec<i64>, Vec<f64>>,
}

mod entries {
    use std::collections::HashMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &HashMap<Vec<i64>, Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
        let mut rows: Vec<(&Vec<i64>, &Vec<f64>)> = map.iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<HashMap<Vec<i64>, Vec<f64>>, D::Error> {
        let rows: Vec<(Vec<i64>, Vec<f64>)> = Vec::deserialize(d)?;
        Ok(rows.into_iter().collect())
    }
}

impl QTable {
    pub fn new(shape: PolicyShape) -> Self {
        QTable { shape, values: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, key: &[i64], action: usize) -> f64 {
        self.values.get(key).map_or(0.0, |row| row[action])
    }

    /// Best eligible action; ties go to the lowest index.
    pub fn greedy(&self, key: &[i64], mask: &[bool]) -> usize {
        match self.values.get(key) {
            Some(row) => argmax_lowest(row, mask),
            None => mask.iter().position(|&m| m).expect("mask has an eligible entry"),
        }
    }

    fn best_value(&self, key: &[i64], mask: &[bool]) -> f64 {
        match self.values.get(key) {
            Some(row) => row.iter().zip(mask).filter(|(_, &ok)| ok).map(|(&v, _)| v).fold(f64::NEG_INFINITY, f64::max),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QTraining {
    pub table: QTable,
    pub curve: Vec<CurvePoint>,
}

pub fn train_q(instance: Arc<Instance>, reward: RewardConfig, features: Features, hp: &QHyperparams) -> Result<QTraining> {
    hp.validate()?;
    let mut env = Env::new(instance.clone(), reward, features)?;
    let mut table = QTable::new(PolicyShape::of(&instance, features));
    let n_actions = env.action_space().len();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut curve = Vec::with_capacity(hp.episodes);
    let step_cap = crate::env::MAX_STEPS_PER_OP * instance.total_ops().max(1);

    for episode in 0..hp.episodes {
        env.reset();
        let eps = hp.epsilon(episode);
        let mut ret = 0.0;
        let mut discount = 1.0;
        let mut steps = 0;
        while !env.is_done() {
            steps += 1;
            if steps > step_cap {
                return Err(Error::GuardExceeded(format!("episode exceeded {step_cap} steps")));
            }
            let key = env.state().canonical_key();
            let mask = env.eligible_actions();
            let a = if rng.gen::<f64>() < eps {
                let eligible: Vec<usize> = (0..n_actions).filter(|&i| mask[i]).collect();
                eligible[rng.gen_range(0..eligible.len())]
            } else {
                table.greedy(&key, &mask)
            };
            let out = env.step_index(a)?;
            ret += discount * out.reward;
            discount *= reward.gamma;
            let future = if out.done {
                0.0
            } else {
                table.best_value(&env.state().canonical_key(), &out.info.mask)
            };
            let target = out.reward + reward.gamma * future;
            if !table.values.contains_key(&key) && table.values.len() >= hp.max_states {
                return Err(Error::GuardExceeded(format!("Q table exceeded {} states", hp.max_states)));
            }
            let row = table.values.entry(key).or_insert_with(|| vec![0.0; n_actions]);
            row[a] += hp.alpha * (target - row[a]);
            if !row[a].is_finite() {
                return Err(Error::Diverged(format!("non-finite Q value in episode {episode}")));
            }
        }
        curve.push(CurvePoint { episode, ret, makespan: env.kpis().makespan });
    }
    Ok(QTraining { table, curve })
}
