//! Seeded random instances for benchmarks and property tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BufferSpec, Instance, Job, Machine, Operation, SetupId};

/// Inclusive bounds of a uniform draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T> {
    pub lo: T,
    pub hi: T,
}

impl<T> Range<T> {
    pub const fn new(lo: T, hi: T) -> Self {
        Range { lo, hi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    pub seed: u64,
    pub jobs: Range<usize>,
    pub machines: Range<usize>,
    /// Non-neutral setups per machine.
    pub setups_per_machine: Range<usize>,
    pub batch_size: Range<u32>,
    /// Minutes per piece.
    pub unit_time: Range<f64>,
    pub volume: Range<f64>,
    pub transport: Range<f64>,
    pub setup_time: Range<f64>,
    /// Deadline = slack * (sum of the job's batch times).
    pub deadline_slack: Range<f64>,
    /// Buffer capacity = factor * (initial load, or the largest volume, plus the largest volume).
    pub capacity_factor: Range<f64>,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            seed: 0,
            jobs: Range::new(3, 3),
            machines: Range::new(3, 3),
            setups_per_machine: Range::new(1, 3),
            batch_size: Range::new(10, 400),
            unit_time: Range::new(0.02, 0.2),
            volume: Range::new(2.0, 30.0),
            transport: Range::new(0.0, 15.0),
            setup_time: Range::new(0.0, 10.0),
            deadline_slack: Range::new(1.2, 3.0),
            capacity_factor: Range::new(1.0, 1.5),
        }
    }
}

impl GenSpec {
    pub fn sized(seed: u64, jobs: usize, machines: usize) -> Self {
        GenSpec { seed, jobs: Range::new(jobs, jobs), machines: Range::new(machines, machines), ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        fn ordered<T: PartialOrd + std::fmt::Debug>(name: &str, r: &Range<T>, min: T) -> Result<()> {
            if r.lo < min || r.lo > r.hi {
                return Err(Error::domain(format!("{name}: bounds {:?}..={:?} must satisfy {min:?} <= lo <= hi", r.lo, r.hi)));
            }
            Ok(())
        }
        ordered("jobs", &self.jobs, 1)?;
        ordered("machines", &self.machines, 1)?;
        ordered("setups_per_machine", &self.setups_per_machine, 1)?;
        ordered("batch_size", &self.batch_size, 1)?;
        ordered("unit_time", &self.unit_time, f64::MIN_POSITIVE)?;
        ordered("volume", &self.volume, 0.0)?;
        ordered("transport", &self.transport, 0.0)?;
        ordered("setup_time", &self.setup_time, 0.0)?;
        ordered("deadline_slack", &self.deadline_slack, 0.0)?;
        ordered("capacity_factor", &self.capacity_factor, 1.0)?;
        Ok(())
    }
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

/// Builds an instance from `spec`. The same spec always yields the same
/// instance. Every job visits every machine once in a random order, volumes
/// shrink along the route, and buffers are sized so the initial placement fits.
pub fn generate_instance(spec: &GenSpec) -> Result<Instance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = rng.gen_range(spec.jobs.lo..=spec.jobs.hi);
    let m = rng.gen_range(spec.machines.lo..=spec.machines.hi);
    let uniform = |rng: &mut ChaCha8Rng, r: Range<f64>| if r.lo == r.hi { r.lo } else { rng.gen_range(r.lo..=r.hi) };

    let machines: Vec<Machine> = (0..m)
        .map(|id| {
            let k = rng.gen_range(spec.setups_per_machine.lo..=spec.setups_per_machine.hi) + 1;
            let setup_time = (0..k)
                .map(|a| (0..k).map(|b| if a == b { 0.0 } else { uniform(&mut rng, spec.setup_time).round() }).collect())
                .collect();
            let setups = std::iter::once("neutral".to_string()).chain((1..k).map(|s| format!("s{s}"))).collect();
            Machine { id, name: format!("M{}", id + 1), setups, setup_time }
        })
        .collect();

    let mut transport = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in (a + 1)..m {
            let t = uniform(&mut rng, spec.transport).round();
            transport[a][b] = t;
            transport[b][a] = t;
        }
    }

    let mut jobs = Vec::with_capacity(n);
    for id in 0..n {
        let mut route: Vec<usize> = (0..m).collect();
        route.shuffle(&mut rng);
        let batch_size = rng.gen_range(spec.batch_size.lo..=spec.batch_size.hi);
        let mut volumes: Vec<f64> = (0..m).map(|_| round_to(uniform(&mut rng, spec.volume), 0.5)).collect();
        volumes.sort_by(|a, b| b.total_cmp(a));
        let ops: Vec<Operation> = route
            .iter()
            .zip(&volumes)
            .map(|(&machine, &volume)| {
                let setup = SetupId(rng.gen_range(1..machines[machine].setup_count()));
                let unit_time = round_to(uniform(&mut rng, spec.unit_time), 0.001).max(0.001);
                Operation { machine, setup, unit_time, volume }
            })
            .collect();
        let work: f64 = ops.iter().map(|o| batch_size as f64 * o.unit_time).sum();
        let deadline = round_to(work * uniform(&mut rng, spec.deadline_slack), 1.0);
        jobs.push(Job { id, name: format!("J{}", id + 1), batch_size, deadline, ops });
    }

    let buffers = (0..m)
        .map(|k| {
            let initial: f64 = jobs.iter().filter(|j| j.ops[0].machine == k).map(|j| j.ops[0].volume).sum();
            let largest = jobs
                .iter()
                .flat_map(|j| j.ops.iter())
                .filter(|o| o.machine == k)
                .map(|o| o.volume)
                .fold(0.0, f64::max);
            // room for the initial jobs plus one arrival keeps deadlocks rare
            let need = (initial.max(largest) + largest).max(1.0);
            let capacity = (need * uniform(&mut rng, spec.capacity_factor)).ceil().max(need);
            BufferSpec { machine: k, capacity }
        })
        .collect();

    let inst = Instance { machines, jobs, buffers, transport };
    inst.validate()?;
    Ok(inst)
}
