use serde::{Deserialize, Serialize};

use super::EnvState;
use crate::model::{job_volume_at, Instance};

/// The three observation blocks the agent sees.
///
/// * `machine_info` is 3 x m: current job (index + 1, 0 when idle),
///   remaining operation time, current setup id.
/// * `job_info` is 2 x n: current volume, time left until the deadline
///   (negative once overdue).
/// * `buffer_info` holds the load of every buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub machine_info: [Vec<f64>; 3],
    pub job_info: [Vec<f64>; 2],
    pub buffer_info: Vec<f64>,
}

impl Observation {
    pub fn flat_len(&self) -> usize {
        3 * self.machine_info[0].len() + 2 * self.job_info[0].len() + self.buffer_info.len()
    }
}

pub fn observe(state: &EnvState, instance: &Instance) -> Observation {
    let clock = state.clock;
    let machine_info = [
        state.machines.iter().map(|m| m.current_job.map_or(0.0, |j| (j + 1) as f64)).collect(),
        state.machines.iter().map(|m| m.remaining_time(clock)).collect(),
        state.machines.iter().map(|m| m.current_setup.0 as f64).collect(),
    ];
    let job_info = [
        instance
            .jobs
            .iter()
            .zip(&state.jobs)
            .map(|(job, s)| job_volume_at(job, s.next_op).expect("next_op within range"))
            .collect(),
        instance.jobs.iter().map(|job| job.deadline - clock).collect(),
    ];
    Observation { machine_info, job_info, buffer_info: state.buffer_load.clone() }
}
