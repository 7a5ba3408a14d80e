use serde::{Deserialize, Serialize};

use super::validate::{sweep_buffers, tol, validate_schedule};
use super::{IntervalKind, Schedule};
use crate::error::{Error, Result};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kpis {
    /// Latest end of any scheduled segment; equals the last completion for
    /// a finished schedule.
    pub makespan: f64,
    pub total_tardiness: f64,
    pub tardy_jobs: usize,
    pub peak_buffer: Vec<f64>,
    /// Setup plus processing time over makespan, per machine.
    pub machine_utilization: Vec<f64>,
    pub setup_time_total: f64,
    pub completed_jobs: usize,
}

impl Kpis {
    /// Field-by-field comparison at the time tolerance.
    pub fn approx_eq(&self, other: &Kpis) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= tol(a.max(b)) * 100.0;
        let all = |a: &[f64], b: &[f64]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(*x, *y));
        close(self.makespan, other.makespan)
            && close(self.total_tardiness, other.total_tardiness)
            && self.tardy_jobs == other.tardy_jobs
            && self.completed_jobs == other.completed_jobs
            && all(&self.peak_buffer, &other.peak_buffer)
            && all(&self.machine_utilization, &other.machine_utilization)
            && close(self.setup_time_total, other.setup_time_total)
    }
}

/// KPIs computed from the interval list alone. Rejects invalid schedules.
pub fn compute_kpis(instance: &Instance, schedule: &Schedule) -> Result<Kpis> {
    let violations = validate_schedule(instance, schedule)?;
    if !violations.is_empty() {
        return Err(Error::InvalidSchedule(violations));
    }
    let makespan = schedule.end_time();
    let mut total_tardiness = 0.0;
    let mut tardy_jobs = 0;
    for (job, c) in instance.jobs.iter().zip(&schedule.completion) {
        if let Some(c) = c {
            let late = (c - job.deadline).max(0.0);
            if late > crate::model::TIME_EPS {
                tardy_jobs += 1;
                total_tardiness += late;
            }
        }
    }
    let mut busy = vec![0.0; instance.n_machines()];
    let mut setup_time_total = 0.0;
    for iv in &schedule.intervals {
        match iv.kind {
            IntervalKind::Setup => {
                busy[iv.machine] += iv.duration();
                setup_time_total += iv.duration();
            }
            IntervalKind::Process => busy[iv.machine] += iv.duration(),
            IntervalKind::Transport => {}
        }
    }
    Ok(Kpis {
        makespan,
        total_tardiness,
        tardy_jobs,
        peak_buffer: sweep_buffers(instance, schedule).peak,
        machine_utilization: busy.iter().map(|b| if makespan > 0.0 { b / makespan } else { 0.0 }).collect(),
        setup_time_total,
        completed_jobs: schedule.completion.iter().filter(|c| c.is_some()).count(),
    })
}
