use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Action, Env, JobLocation};
use crate::error::{Error, Result};

/// Priority dispatching rules plus a uniform random baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Heuristic {
    Random,
    Fcfs,
    Edd,
    Spt,
    Lpt,
}

impl Heuristic {
    pub const ALL: [Heuristic; 5] = [Heuristic::Random, Heuristic::Fcfs, Heuristic::Edd, Heuristic::Spt, Heuristic::Lpt];
}

/// Overall time the next operation of `job` would take if dispatched now:
/// batch time plus transport from where it waits plus the setup change.
pub fn next_op_time(env: &Env, job: usize) -> Option<f64> {
    let inst = env.instance();
    let status = env.state().jobs.get(job)?;
    let JobLocation::InBuffer { machine: here } = status.location else { return None };
    let spec = &inst.jobs[job];
    let op = spec.ops.get(status.next_op)?;
    let current = env.state().machines[op.machine].current_setup;
    let setup = inst.machines[op.machine].setup_time[current.0][op.setup.0];
    Some(spec.batch_time(status.next_op) + inst.transport[here][op.machine] + setup)
}

/// Picks among eligible assignments by the rule's priority, ties going to the
/// lowest job index. Falls back to `Noop` when no assignment is possible.
pub fn heuristic_select(rule: Heuristic, env: &Env, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<Action> {
    let space = env.action_space();
    let candidates: Vec<usize> = (0..env.instance().n_jobs()).filter(|&j| mask.get(j).copied().unwrap_or(false)).collect();
    if candidates.is_empty() {
        if mask.get(space.noop_index()).copied().unwrap_or(false) {
            return Ok(Action::Noop);
        }
        let first = mask.iter().position(|&m| m).ok_or(Error::EmptyMask)?;
        return space.action(first).ok_or(Error::EmptyMask);
    }
    let key = |j: usize| -> f64 {
        match rule {
            Heuristic::Fcfs => env.state().jobs[j].ready_since,
            Heuristic::Edd => env.instance().jobs[j].deadline,
            Heuristic::Spt => next_op_time(env, j).unwrap_or(f64::INFINITY),
            Heuristic::Lpt => -next_op_time(env, j).unwrap_or(f64::NEG_INFINITY),
            Heuristic::Random => 0.0,
        }
    };
    let job = if rule == Heuristic::Random {
        candidates[rng.gen_range(0..candidates.len())]
    } else {
        let mut best = candidates[0];
        for &j in &candidates[1..] {
            if key(j) < key(best) {
                best = j;
            }
        }
        best
    };
    Ok(Action::Assign { job })
}
