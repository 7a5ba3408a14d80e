//! Domain types for the extended job shop: batch sizes, sequence-dependent
//! setups, transport between machines, buffers in front of every machine,
//! per-operation volumes and job deadlines.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Absolute tolerance for comparing times and volumes.
pub const TIME_EPS: f64 = 1e-9;

/// A machine setup index. `0` is the neutral setup every machine starts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct SetupId(pub usize);

impl SetupId {
    pub const NEUTRAL: SetupId = SetupId(0);

    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for SetupId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.0 == 0 {
            write!(f, "neutral")
        } else {
            write!(f, "s{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Machine {
    pub id: usize,
    pub name: String,
    /// Setup labels; index 0 is the neutral setup.
    pub setups: Vec<String>,
    /// `setup_time[from][to]` in minutes.
    pub setup_time: Vec<Vec<f64>>,
}

impl Machine {
    pub fn setup_count(&self) -> usize {
        self.setups.len()
    }

    pub fn has_setup(&self, setup: SetupId) -> bool {
        setup.0 < self.setup_count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Operation {
    pub machine: usize,
    pub setup: SetupId,
    /// Minutes per piece.
    pub unit_time: f64,
    /// Space the job occupies while waiting for and undergoing this operation.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: usize,
    pub name: String,
    /// Quantity factor: number of pieces in the batch.
    pub batch_size: u32,
    pub deadline: f64,
    /// Operations in their fixed machine order.
    pub ops: Vec<Operation>,
}

impl Job {
    /// Pure processing time of operation `op` for the whole batch.
    pub fn batch_time(&self, op: usize) -> f64 {
        self.batch_size as f64 * self.ops[op].unit_time
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferSpec {
    pub machine: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub machines: Vec<Machine>,
    pub jobs: Vec<Job>,
    /// One buffer per machine, indexed by machine.
    pub buffers: Vec<BufferSpec>,
    /// `transport[from][to]` in minutes.
    pub transport: Vec<Vec<f64>>,
}

/// Overall processing time of one operation: `batch * unit_time + transport + setup`.
pub fn total_processing_time(batch_size: u32, unit_time: f64, transport: f64, setup: f64) -> Result<f64> {
    if batch_size == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    if !unit_time.is_finite() || unit_time <= 0.0 {
        return Err(Error::domain(format!("unit time must be finite and > 0, got {unit_time}")));
    }
    for (what, v) in [("transport", transport), ("setup", setup)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::domain(format!("{what} time must be finite and >= 0, got {v}")));
        }
    }
    Ok(batch_size as f64 * unit_time + transport + setup)
}

pub fn setup_time(machine: &Machine, from: SetupId, to: SetupId) -> Result<f64> {
    if !machine.has_setup(from) || !machine.has_setup(to) {
        return Err(Error::domain(format!(
            "setup {from}->{to} out of range for machine {} ({} setups)",
            machine.name,
            machine.setup_count()
        )));
    }
    Ok(machine.setup_time[from.0][to.0])
}

pub fn transport_time(instance: &Instance, from: usize, to: usize) -> Result<f64> {
    let m = instance.machines.len();
    if from >= m || to >= m {
        return Err(Error::domain(format!("transport {from}->{to} out of range for {m} machines")));
    }
    Ok(instance.transport[from][to])
}

/// Volume of `job` while its next pending operation is `next_op`. A finished
/// job has left the system and occupies nothing.
pub fn job_volume_at(job: &Job, next_op: usize) -> Result<f64> {
    match next_op.cmp(&job.ops.len()) {
        std::cmp::Ordering::Less => Ok(job.ops[next_op].volume),
        std::cmp::Ordering::Equal => Ok(0.0),
        std::cmp::Ordering::Greater => Err(Error::domain(format!(
            "operation index {next_op} out of range for job {} ({} ops)",
            job.name,
            job.ops.len()
        ))),
    }
}

fn check_time(path: impl FnOnce() -> String, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::invalid(path(), format!("expected finite value >= 0, got {v}")));
    }
    Ok(())
}

impl Instance {
    pub fn n_jobs(&self) -> usize {
        self.jobs.len()
    }

    pub fn n_machines(&self) -> usize {
        self.machines.len()
    }

    pub fn capacity(&self, machine: usize) -> f64 {
        self.buffers[machine].capacity
    }

    pub fn total_ops(&self) -> usize {
        self.jobs.iter().map(|j| j.ops.len()).sum()
    }

    /// Checks every structural invariant. Instances built by hand should pass
    /// through here before reaching the environment.
    pub fn validate(&self) -> Result<()> {
        let m = self.machines.len();
        if m == 0 {
            return Err(Error::invalid("machines", "at least one machine is required"));
        }
        for (i, machine) in self.machines.iter().enumerate() {
            let p = format!("machines[{i}]");
            if machine.id != i {
                return Err(Error::invalid(format!("{p}.id"), format!("expected {i}, got {}", machine.id)));
            }
            let k = machine.setup_count();
            if k == 0 {
                return Err(Error::invalid(format!("{p}.setups"), "at least the neutral setup is required"));
            }
            if machine.setup_time.len() != k || machine.setup_time.iter().any(|r| r.len() != k) {
                return Err(Error::invalid(format!("{p}.setup_time"), format!("expected a {k}x{k} matrix")));
            }
            for (a, row) in machine.setup_time.iter().enumerate() {
                for (b, &v) in row.iter().enumerate() {
                    check_time(|| format!("{p}.setup_time[{a}][{b}]"), v)?;
                    if a == b && v != 0.0 {
                        return Err(Error::invalid(format!("{p}.setup_time[{a}][{a}]"), "diagonal must be 0"));
                    }
                }
            }
        }
        if self.transport.len() != m || self.transport.iter().any(|r| r.len() != m) {
            return Err(Error::invalid("transport", format!("expected a {m}x{m} matrix")));
        }
        for (a, row) in self.transport.iter().enumerate() {
            for (b, &v) in row.iter().enumerate() {
                check_time(|| format!("transport[{a}][{b}]"), v)?;
                if a == b && v != 0.0 {
                    return Err(Error::invalid(format!("transport[{a}][{a}]"), "diagonal must be 0"));
                }
            }
        }
        if self.buffers.len() != m {
            return Err(Error::invalid("buffers", format!("expected exactly one buffer per machine ({m})")));
        }
        for (i, b) in self.buffers.iter().enumerate() {
            if b.machine != i {
                return Err(Error::invalid(format!("buffers[{i}].machine"), format!("expected {i}, got {}", b.machine)));
            }
            if !b.capacity.is_finite() || b.capacity <= 0.0 {
                return Err(Error::invalid(format!("buffers[{i}].capacity"), "capacity must be finite and > 0"));
            }
        }
        let mut initial = vec![0.0; m];
        for (i, job) in self.jobs.iter().enumerate() {
            let p = format!("jobs[{i}]");
            if job.id != i {
                return Err(Error::invalid(format!("{p}.id"), format!("expected {i}, got {}", job.id)));
            }
            if job.batch_size == 0 {
                return Err(Error::invalid(format!("{p}.quantity"), "batch size must be >= 1"));
            }
            check_time(|| format!("{p}.deadline"), job.deadline)?;
            if job.ops.is_empty() {
                return Err(Error::invalid(format!("{p}.operations"), "a job needs at least one operation"));
            }
            for (j, op) in job.ops.iter().enumerate() {
                let p = format!("{p}.operations[{j}]");
                if op.machine >= m {
                    return Err(Error::invalid(format!("{p}.machine"), format!("unknown machine {}", op.machine)));
                }
                if !self.machines[op.machine].has_setup(op.setup) {
                    return Err(Error::invalid(
                        format!("{p}.setup"),
                        format!("setup {} not defined on machine {}", op.setup, self.machines[op.machine].name),
                    ));
                }
                if !op.unit_time.is_finite() || op.unit_time <= 0.0 {
                    return Err(Error::invalid(format!("{p}.machining_time"), "must be finite and > 0"));
                }
                check_time(|| format!("{p}.volume"), op.volume)?;
            }
            initial[job.ops[0].machine] += job.ops[0].volume;
        }
        for (k, load) in initial.iter().enumerate() {
            if *load > self.buffers[k].capacity + TIME_EPS {
                return Err(Error::invalid(
                    format!("buffers[{k}]"),
                    format!(
                        "initial placement needs {load} but capacity is {}",
                        self.buffers[k].capacity
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Upper bound on the time any schedule needs: every operation run back
    /// to back with the worst transport and setup it could incur.
    pub fn horizon(&self) -> f64 {
        let max_transport = self
            .transport
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold(0.0, f64::max);
        self.jobs
            .iter()
            .flat_map(|job| {
                job.ops.iter().map(move |op| {
                    let max_setup = self.machines[op.machine]
                        .setup_time
                        .iter()
                        .map(|r| r[op.setup.0])
                        .fold(0.0, f64::max);
                    job.batch_size as f64 * op.unit_time + max_transport + max_setup
                })
            })
            .sum()
    }

    pub fn max_capacity(&self) -> f64 {
        self.buffers.iter().map(|b| b.capacity).fold(0.0, f64::max)
    }

    /// Stable content hash (hex SHA-256 of the canonical JSON form).
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("instance serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::paper_instance;

    #[test]
    fn operation_time_examples() {
        assert_eq!(total_processing_time(400, 0.0625, 0.0, 4.0).unwrap(), 29.0);
        assert_eq!(total_processing_time(1, 5.0, 0.0, 0.0).unwrap(), 5.0);
        assert!((total_processing_time(400, 0.04, 0.0, 8.0).unwrap() - 24.0).abs() < TIME_EPS);
    }

    #[test]
    fn operation_time_rejects_bad_input() {
        assert!(total_processing_time(0, 1.0, 0.0, 0.0).is_err());
        assert!(total_processing_time(1, 0.0, 0.0, 0.0).is_err());
        assert!(total_processing_time(1, 1.0, -1.0, 0.0).is_err());
        assert!(total_processing_time(1, 1.0, 0.0, f64::NAN).is_err());
        assert!(total_processing_time(1, f64::INFINITY, 0.0, 0.0).is_err());
    }

    #[test]
    fn setup_lookups() {
        let inst = paper_instance();
        let (s1, s2) = (SetupId(1), SetupId(2));
        assert_eq!(setup_time(&inst.machines[0], s1, s2).unwrap(), 8.0);
        assert_eq!(setup_time(&inst.machines[2], s1, s2).unwrap(), 0.0);
        for m in &inst.machines {
            assert_eq!(setup_time(m, s2, s2).unwrap(), 0.0);
        }
        assert!(setup_time(&inst.machines[0], SetupId(4), s1).is_err());
    }

    #[test]
    fn transport_lookups() {
        let inst = paper_instance();
        assert_eq!(transport_time(&inst, 0, 1).unwrap(), 10.0);
        assert_eq!(transport_time(&inst, 0, 2).unwrap(), 15.0);
        assert_eq!(transport_time(&inst, 1, 1).unwrap(), 0.0);
        assert!(transport_time(&inst, 3, 0).is_err());
    }

    #[test]
    fn volume_lookups() {
        let inst = paper_instance();
        let j3 = &inst.jobs[2];
        assert_eq!(job_volume_at(j3, 0).unwrap(), 20.0);
        assert_eq!(job_volume_at(j3, 1).unwrap(), 15.0);
        assert_eq!(job_volume_at(j3, 3).unwrap(), 0.0);
        assert!(job_volume_at(j3, 4).is_err());
    }

    #[test]
    fn first_operation_of_job_three() {
        let inst = paper_instance();
        let job = &inst.jobs[2];
        let op = &job.ops[0];
        let s = setup_time(&inst.machines[op.machine], SetupId::NEUTRAL, op.setup).unwrap();
        let t = transport_time(&inst, op.machine, op.machine).unwrap();
        assert_eq!(total_processing_time(job.batch_size, op.unit_time, t, s).unwrap(), 29.0);
    }

    #[test]
    fn validation_rejects_broken_instances() {
        let base = paper_instance();
        base.validate().unwrap();

        let mut x = base.clone();
        x.machines[0].setup_time[1][1] = 1.0;
        assert!(x.validate().is_err());

        let mut x = base.clone();
        x.transport[0][1] = -1.0;
        assert!(x.validate().is_err());

        let mut x = base.clone();
        x.jobs[0].ops[0].setup = SetupId(9);
        assert!(x.validate().is_err());

        let mut x = base.clone();
        x.jobs[0].ops[0].machine = 7;
        assert!(x.validate().is_err());

        // doubling first-operation volumes overflows buffer 1 (120 > 60)
        let mut x = base.clone();
        for job in &mut x.jobs {
            job.ops[0].volume *= 2.0;
        }
        let err = x.validate().unwrap_err();
        assert!(err.to_string().contains("buffers[0]"), "{err}");
    }

    #[test]
    fn asymmetric_transport_allowed() {
        let mut x = paper_instance();
        x.transport[0][1] = 3.0;
        x.validate().unwrap();
    }

    #[test]
    fn setup_diagonal_is_zero_everywhere() {
        let inst = paper_instance();
        for m in &inst.machines {
            for s in 0..m.setup_count() {
                assert_eq!(setup_time(m, SetupId(s), SetupId(s)).unwrap(), 0.0);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn linear_in_batch_size(b in 1u32..5000, d in 0.001f64..10.0, t in 0.0f64..100.0, s in 0.0f64..100.0) {
                let one = total_processing_time(b, d, t, s).unwrap();
                let two = total_processing_time(2 * b, d, t, s).unwrap();
                prop_assert!((two - one - b as f64 * d).abs() < 1e-9 * two.max(1.0));
            }

            #[test]
            fn monotone_in_each_argument(b in 1u32..5000, d in 0.001f64..10.0, t in 0.0f64..100.0, s in 0.0f64..100.0, e in 0.0f64..10.0) {
                let base = total_processing_time(b, d, t, s).unwrap();
                prop_assert!(total_processing_time(b + 1, d, t, s).unwrap() >= base);
                prop_assert!(total_processing_time(b, d + e, t, s).unwrap() >= base);
                prop_assert!(total_processing_time(b, d, t + e, s).unwrap() >= base);
                prop_assert!(total_processing_time(b, d, t, s + e).unwrap() >= base);
            }
        }
    }
}
