//! Actor-critic trained with the clipped surrogate objective, generalized
//! advantage estimation and an entropy bonus. Invalid actions get `-inf`
//! logits so their probability is exactly zero.

mod net;

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use net::{Adam, Cache, Mlp};

use super::{sample_index, CurvePoint, PolicyShape};
use crate::env::{Env, Features, RewardConfig, MAX_STEPS_PER_OP};
use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgHyperparams {
    pub updates: usize,
    pub episodes_per_update: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for PgHyperparams {
    fn default() -> Self {
        PgHyperparams {
            updates: 150,
            episodes_per_update: 8,
            epochs: 4,
            minibatch: 64,
            lr: 3e-3,
            gamma: 1.0,
            lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl PgHyperparams {
    pub fn validate(&self) -> Result<()> {
        let unit = [("gamma", self.gamma), ("lambda", self.lambda)];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::domain(format!("clip must lie in (0, 1), got {}", self.clip)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::domain("learning rate must be finite and > 0"));
        }
        if self.updates == 0 || self.episodes_per_update == 0 || self.epochs == 0 || self.minibatch == 0 {
            return Err(Error::domain("updates, episodes, epochs and minibatch must be >= 1"));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::domain("hidden layers must be non-empty"));
        }
        Ok(())
    }
}

/// Separate policy and value networks over the same input encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub shape: PolicyShape,
    /// Minutes are divided by this before entering the network.
    pub time_scale: f64,
    /// Buffer volumes are divided by this.
    pub volume_scale: f64,
    pub actor: Mlp,
    pub critic: Mlp,
}

pub fn input_len(shape: &PolicyShape) -> usize {
    2 * shape.n_machines + shape.setup_counts.iter().sum::<usize>() + 2 * shape.n_jobs + shape.n_machines + shape.action_count
}

impl ActorCritic {
    pub fn new(instance: &Instance, features: Features, hidden: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let shape = PolicyShape::of(instance, features);
        let input = input_len(&shape);
        let sizes = |out: usize| std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(out)).collect();
        let actor = Mlp::new(sizes(shape.action_count), rng, 0.01);
        let critic = Mlp::new(sizes(1), rng, 1.0);
        ActorCritic {
            time_scale: (instance.horizon() / instance.n_machines() as f64).max(1.0),
            volume_scale: instance.max_capacity().max(1.0),
            shape,
            actor,
            critic,
        }
    }

    /// Network input: observation blocks (setups one-hot, buffers as fill
    /// ratio) followed by the action mask.
    pub fn encode(&self, env: &Env, mask: &[bool]) -> Vec<f64> {
        let obs = env.observe();
        let mut x = Vec::with_capacity(self.actor.input_len());
        for (k, &count) in self.shape.setup_counts.iter().enumerate() {
            x.push(if obs.machine_info[0][k] > 0.0 { 1.0 } else { 0.0 });
            x.push(obs.machine_info[1][k] / self.time_scale);
            let setup = obs.machine_info[2][k] as usize;
            x.extend((0..count).map(|s| if s == setup { 1.0 } else { 0.0 }));
        }
        for j in 0..self.shape.n_jobs {
            x.push(obs.job_info[0][j] / self.volume_scale);
            x.push(obs.job_info[1][j] / self.time_scale);
        }
        for (k, load) in obs.buffer_info.iter().enumerate() {
            x.push(load / env.instance().capacity(k));
        }
        x.extend(mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        x
    }

    pub fn action_probs(&self, env: &Env, mask: &[bool]) -> Vec<f64> {
        let x = self.encode(env, mask);
        masked_softmax(self.actor.forward(&x).output(), mask)
    }

    pub fn value(&self, env: &Env, mask: &[bool]) -> f64 {
        let x = self.encode(env, mask);
        self.critic.forward(&x).output()[0]
    }

    fn is_finite(&self) -> bool {
        self.actor.params.iter().chain(&self.critic.params).all(|p| p.is_finite())
    }
}

/// Softmax over eligible entries; masked entries get probability exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = logits.iter().zip(mask).filter(|(_, &ok)| ok).map(|(&z, _)| z).fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().zip(mask).map(|(&z, &ok)| if ok { (z - max).exp() } else { 0.0 }).collect();
    let sum: f64 = p.iter().sum();
    for v in &mut p {
        *v /= sum;
    }
    p
}

/// One decision recorded for the update step.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub logp_old: f64,
    pub advantage: f64,
    pub target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossCoefficients {
    pub clip: f64,
    pub entropy: f64,
    pub value: f64,
}

impl From<&PgHyperparams> for LossCoefficients {
    fn from(hp: &PgHyperparams) -> Self {
        LossCoefficients { clip: hp.clip, entropy: hp.entropy_coef, value: hp.value_coef }
    }
}

fn sample_terms(actor_out: &[f64], value: f64, s: &Sample, c: &LossCoefficients) -> (f64, f64, f64, f64, Vec<f64>) {
    let p = masked_softmax(actor_out, &s.mask);
    let logp = p[s.action].ln();
    let ratio = (logp - s.logp_old).exp();
    let unclipped = ratio * s.advantage;
    let clipped = ratio.clamp(1.0 - c.clip, 1.0 + c.clip) * s.advantage;
    let entropy: f64 = -p.iter().filter(|&&q| q > 0.0).map(|&q| q * q.ln()).sum::<f64>();
    let v_err = value - s.target;
    (unclipped.min(clipped), entropy, v_err, if unclipped <= clipped { ratio * s.advantage } else { 0.0 }, p)
}

/// Mean loss `-surrogate + value_coef * (V - target)^2 - entropy_coef * H`.
pub fn ppo_loss(actor: &Mlp, critic: &Mlp, batch: &[Sample], c: &LossCoefficients) -> f64 {
    let n = batch.len() as f64;
    batch
        .iter()
        .map(|s| {
            let out = actor.forward(&s.x);
            let v = critic.forward(&s.x).output()[0];
            let (surr, ent, v_err, _, _) = sample_terms(out.output(), v, s, c);
            (-surr + c.value * v_err * v_err - c.entropy * ent) / n
        })
        .sum()
}

/// Loss and its gradients with respect to actor and critic parameters.
pub fn ppo_grad(actor: &Mlp, critic: &Mlp, batch: &[Sample], c: &LossCoefficients) -> (f64, Vec<f64>, Vec<f64>) {
    let n = batch.len() as f64;
    let mut ga = vec![0.0; actor.params.len()];
    let mut gc = vec![0.0; critic.params.len()];
    let mut loss = 0.0;
    for s in batch {
        let a_cache = actor.forward(&s.x);
        let c_cache = critic.forward(&s.x);
        let v = c_cache.output()[0];
        let (surr, ent, v_err, d_surr_d_logp, p) = sample_terms(a_cache.output(), v, s, c);
        loss += (-surr + c.value * v_err * v_err - c.entropy * ent) / n;

        let mut d_logits = vec![0.0; p.len()];
        for k in 0..p.len() {
            if !s.mask[k] {
                continue;
            }
            let d_logp = if k == s.action { 1.0 } else { 0.0 } - p[k];
            let d_ent = if p[k] > 0.0 { -p[k] * (p[k].ln() + ent) } else { 0.0 };
            d_logits[k] = (-d_surr_d_logp * d_logp - c.entropy * d_ent) / n;
        }
        actor.backward(&a_cache, &d_logits, &mut ga);
        critic.backward(&c_cache, &[2.0 * c.value * v_err / n], &mut gc);
    }
    (loss, ga, gc)
}

fn clip_norm(g: &mut [f64], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        for x in g.iter_mut() {
            *x *= max_norm / norm;
        }
    }
}

#[derive(Debug, Clone)]
pub struct PgTraining {
    pub policy: ActorCritic,
    pub curve: Vec<CurvePoint>,
}

struct Step {
    x: Vec<f64>,
    mask: Vec<bool>,
    action: usize,
    logp: f64,
    value: f64,
    reward: f64,
}

pub fn train_pg(instance: Arc<Instance>, reward: RewardConfig, features: Features, hp: &PgHyperparams) -> Result<PgTraining> {
    hp.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut ac = ActorCritic::new(&instance, features, &hp.hidden, &mut rng);
    let mut opt_actor = Adam::new(ac.actor.params.len(), hp.lr);
    let mut opt_critic = Adam::new(ac.critic.params.len(), hp.lr);
    let coef = LossCoefficients::from(hp);
    let mut env = Env::new(instance.clone(), reward, features)?;
    let step_cap = MAX_STEPS_PER_OP * instance.total_ops().max(1);
    let mut curve = Vec::with_capacity(hp.updates * hp.episodes_per_update);

    for _ in 0..hp.updates {
        let mut batch = Vec::new();
        for _ in 0..hp.episodes_per_update {
            env.reset();
            let mut steps: Vec<Step> = Vec::new();
            let mut ret = 0.0;
            while !env.is_done() {
                if steps.len() >= step_cap {
                    return Err(Error::GuardExceeded(format!("episode exceeded {step_cap} steps")));
                }
                let mask = env.eligible_actions();
                let x = ac.encode(&env, &mask);
                let probs = masked_softmax(ac.actor.forward(&x).output(), &mask);
                let value = ac.critic.forward(&x).output()[0];
                let action = sample_index(&probs, &mask, &mut rng);
                let out = env.step_index(action)?;
                ret += out.reward;
                steps.push(Step { x, mask, action, logp: probs[action].ln(), value, reward: out.reward / ac.time_scale });
            }
            curve.push(CurvePoint { episode: curve.len(), ret, makespan: env.kpis().makespan });

            let mut gae = 0.0;
            let mut next_value = 0.0;
            let mut tail = Vec::with_capacity(steps.len());
            for s in steps.into_iter().rev() {
                let delta = s.reward + hp.gamma * next_value - s.value;
                gae = delta + hp.gamma * hp.lambda * gae;
                next_value = s.value;
                tail.push(Sample { target: gae + s.value, advantage: gae, x: s.x, mask: s.mask, action: s.action, logp_old: s.logp });
            }
            batch.extend(tail.into_iter().rev());
        }

        let n = batch.len() as f64;
        let mean = batch.iter().map(|s| s.advantage).sum::<f64>() / n;
        let std = (batch.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n).sqrt();
        for s in &mut batch {
            s.advantage = (s.advantage - mean) / (std + 1e-8);
        }

        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..hp.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(hp.minibatch) {
                let mb: Vec<Sample> = chunk.iter().map(|&i| batch[i].clone()).collect();
                let (_, mut ga, mut gc) = ppo_grad(&ac.actor, &ac.critic, &mb, &coef);
                clip_norm(&mut ga, hp.max_grad_norm);
                clip_norm(&mut gc, hp.max_grad_norm);
                opt_actor.step(&mut ac.actor.params, &ga);
                opt_critic.step(&mut ac.critic.params, &gc);
            }
        }
        if !ac.is_finite() {
            return Err(Error::Diverged("network parameters became non-finite".into()));
        }
    }
    Ok(PgTraining { policy: ac, curve })
}
