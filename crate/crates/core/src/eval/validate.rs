//! Independent schedule checker. It reconstructs machine, setup and buffer
//! timelines from the interval list alone and never consults the
//! environment.

use serde::{Deserialize, Serialize};

use super::{IntervalKind, Schedule, ScheduledInterval};
use crate::error::{Error, Result};
use crate::model::{Instance, SetupId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViolationCode {
    /// Two jobs (or a job and a setup) on one machine at the same time.
    Overlap,
    /// Operations out of their fixed order, missing, or on the wrong machine.
    Sequence,
    /// Processing in the wrong setup, or a setup shorter than required.
    SetupMismatch,
    BufferOverflow,
    TransportUnderrun,
    /// An operation split or shortened.
    Preemption,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
    pub time: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?} at t={}: {}", self.code, self.time, self.detail)
    }
}

pub(crate) fn tol(t: f64) -> f64 {
    1e-9 * t.abs().max(1.0)
}

/// Occupancy sweep result shared with KPI computation.
pub(crate) struct BufferSweep {
    pub peak: Vec<f64>,
    pub overflows: Vec<Violation>,
}

fn check_shape(instance: &Instance, schedule: &Schedule) -> Result<()> {
    if !schedule.instance_hash.is_empty() && schedule.instance_hash != instance.content_hash() {
        return Err(Error::Mismatch("schedule was built for a different instance".into()));
    }
    if schedule.completion.len() != instance.n_jobs() {
        return Err(Error::Mismatch(format!(
            "schedule lists {} jobs, instance has {}",
            schedule.completion.len(),
            instance.n_jobs()
        )));
    }
    for (i, iv) in schedule.intervals.iter().enumerate() {
        if iv.machine >= instance.n_machines() {
            return Err(Error::Mismatch(format!("interval {i}: unknown machine {}", iv.machine)));
        }
        if !(iv.start.is_finite() && iv.end.is_finite()) || iv.end < iv.start - tol(iv.start) {
            return Err(Error::Mismatch(format!("interval {i}: bad time range [{}, {}]", iv.start, iv.end)));
        }
        match (iv.job, iv.op_index) {
            (Some(j), Some(o)) => {
                if j >= instance.n_jobs() || o >= instance.jobs[j].ops.len() {
                    return Err(Error::Mismatch(format!("interval {i}: unknown operation ({j}, {o})")));
                }
            }
            (None, None) if iv.kind == IntervalKind::Setup => {}
            _ => return Err(Error::Mismatch(format!("interval {i}: only setups may lack a job"))),
        }
    }
    Ok(())
}

pub fn validate_schedule(instance: &Instance, schedule: &Schedule) -> Result<Vec<Violation>> {
    check_shape(instance, schedule)?;
    let mut out = Vec::new();
    check_sequences(instance, schedule, &mut out);
    check_machines(instance, schedule, &mut out);
    check_setups(instance, schedule, &mut out);
    out.extend(sweep_buffers(instance, schedule).overflows);
    out.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.code.cmp(&b.code)));
    Ok(out)
}

fn check_sequences(instance: &Instance, schedule: &Schedule, out: &mut Vec<Violation>) {
    for (j, job) in instance.jobs.iter().enumerate() {
        let k = schedule.scheduled_ops(j);
        for o in k..job.ops.len() {
            if let Some(iv) = schedule.op_segments(j, o).next() {
                out.push(Violation {
                    code: ViolationCode::Sequence,
                    detail: format!("J{} op {} scheduled before op {}", j + 1, o + 1, k + 1),
                    time: iv.start,
                });
            }
        }
        let mut prev_end: Option<f64> = None;
        for o in 0..k {
            let op = &job.ops[o];
            let t = schedule.op_timing(j, o).expect("prefix op has a process segment");
            for iv in schedule.op_segments(j, o) {
                if iv.machine != op.machine {
                    out.push(Violation {
                        code: ViolationCode::Sequence,
                        detail: format!("J{} op {} placed on M{}, belongs on M{}", j + 1, o + 1, iv.machine + 1, op.machine + 1),
                        time: iv.start,
                    });
                }
                if iv.kind != IntervalKind::Process && iv.end > t.proc_start + tol(t.proc_start) {
                    out.push(Violation {
                        code: ViolationCode::Sequence,
                        detail: format!("J{} op {}: {} segment after processing started", j + 1, o + 1, iv.kind.as_str()),
                        time: iv.start,
                    });
                }
            }
            let batch = job.batch_time(o);
            if t.process_segments > 1 {
                out.push(Violation {
                    code: ViolationCode::Preemption,
                    detail: format!("J{} op {} processed in {} pieces", j + 1, o + 1, t.process_segments),
                    time: t.proc_start,
                });
            } else if ((t.end - t.proc_start) - batch).abs() > tol(batch) * 10.0 {
                out.push(Violation {
                    code: ViolationCode::Preemption,
                    detail: format!("J{} op {} processes for {} instead of {}", j + 1, o + 1, t.end - t.proc_start, batch),
                    time: t.proc_start,
                });
            }
            if let Some(prev) = prev_end {
                if t.dispatch < prev - tol(prev) {
                    out.push(Violation {
                        code: ViolationCode::Sequence,
                        detail: format!("J{} op {} starts at {} before op {} ends at {}", j + 1, o + 1, t.dispatch, o, prev),
                        time: t.dispatch,
                    });
                }
                let need = instance.transport[job.ops[o - 1].machine][op.machine];
                if t.transport < need - tol(need) {
                    out.push(Violation {
                        code: ViolationCode::TransportUnderrun,
                        detail: format!("J{} op {}: transport {} < {}", j + 1, o + 1, t.transport, need),
                        time: t.dispatch,
                    });
                }
            }
            prev_end = Some(t.end);
        }
        let finished = k == job.ops.len();
        match (finished, schedule.completion[j]) {
            (true, Some(c)) if (c - prev_end.unwrap_or(0.0)).abs() <= tol(c) => {}
            (false, None) => {}
            (_, c) => out.push(Violation {
                code: ViolationCode::Sequence,
                detail: format!("J{} completion {:?} disagrees with its last operation", j + 1, c),
                time: prev_end.unwrap_or(0.0),
            }),
        }
    }
}

fn check_machines(instance: &Instance, schedule: &Schedule, out: &mut Vec<Violation>) {
    let mut blocks: Vec<Vec<(f64, f64, String)>> = vec![Vec::new(); instance.n_machines()];
    for (j, job) in instance.jobs.iter().enumerate() {
        for o in 0..schedule.scheduled_ops(j) {
            let t = schedule.op_timing(j, o).expect("prefix op");
            blocks[job.ops[o].machine].push((t.dispatch, t.end, format!("J{} op {}", j + 1, o + 1)));
        }
    }
    for iv in schedule.intervals.iter().filter(|iv| iv.job.is_none()) {
        blocks[iv.machine].push((iv.start, iv.end, format!("pre-setup to {}", iv.setup)));
    }
    for (m, lane) in blocks.iter_mut().enumerate() {
        lane.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut busy: Option<(f64, &str)> = None;
        for (start, end, what) in lane.iter() {
            if let Some((until, holder)) = busy {
                if *start < until - tol(until) && end > start {
                    out.push(Violation {
                        code: ViolationCode::Overlap,
                        detail: format!("M{}: {what} starts at {start} while {holder} runs until {until}", m + 1),
                        time: *start,
                    });
                }
            }
            if busy.is_none_or(|(until, _)| *end > until) {
                busy = Some((*end, what.as_str()));
            }
        }
    }
}

fn check_setups(instance: &Instance, schedule: &Schedule, out: &mut Vec<Violation>) {
    let mut lanes: Vec<Vec<&ScheduledInterval>> = vec![Vec::new(); instance.n_machines()];
    for iv in &schedule.intervals {
        if iv.kind != IntervalKind::Transport {
            lanes[iv.machine].push(iv);
        }
    }
    for (m, lane) in lanes.iter_mut().enumerate() {
        let machine = &instance.machines[m];
        lane.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.kind.cmp(&b.kind)));
        let mut current = SetupId::NEUTRAL;
        for iv in lane.iter() {
            if !machine.has_setup(iv.setup) {
                out.push(Violation {
                    code: ViolationCode::SetupMismatch,
                    detail: format!("M{} has no setup {}", m + 1, iv.setup),
                    time: iv.start,
                });
                continue;
            }
            match iv.kind {
                IntervalKind::Setup => {
                    let need = machine.setup_time[current.0][iv.setup.0];
                    if iv.duration() < need - tol(need) {
                        out.push(Violation {
                            code: ViolationCode::SetupMismatch,
                            detail: format!("M{}: {current}->{} takes {need}, got {}", m + 1, iv.setup, iv.duration()),
                            time: iv.start,
                        });
                    }
                    current = iv.setup;
                }
                IntervalKind::Process => {
                    let (j, o) = (iv.job.expect("process has a job"), iv.op_index.expect("process has an op"));
                    let required = instance.jobs[j].ops[o].setup;
                    if iv.setup != required {
                        out.push(Violation {
                            code: ViolationCode::SetupMismatch,
                            detail: format!("J{} op {} needs {required}, interval says {}", j + 1, o + 1, iv.setup),
                            time: iv.start,
                        });
                    }
                    if current != required {
                        if machine.setup_time[current.0][required.0] <= 0.0 {
                            current = required;
                        } else {
                            out.push(Violation {
                                code: ViolationCode::SetupMismatch,
                                detail: format!("M{} is in {current} but J{} op {} needs {required}", m + 1, j + 1, o + 1),
                                time: iv.start,
                            });
                        }
                    }
                }
                IntervalKind::Transport => unreachable!(),
            }
        }
    }
}

/// Replays buffer occupancy under dispatch reservation: a job holds the
/// volume of operation `o` in that machine's buffer from the moment it is
/// dispatched there (time 0 for the first operation) until it is dispatched
/// onward, or until operation `o` ends if it was the last one. Loads are
/// checked after all changes at an instant have been applied.
pub(crate) fn sweep_buffers(instance: &Instance, schedule: &Schedule) -> BufferSweep {
    let m = instance.n_machines();
    let mut changes: Vec<(f64, usize, f64)> = Vec::new();
    for (j, job) in instance.jobs.iter().enumerate() {
        let k = schedule.scheduled_ops(j);
        let timing: Vec<_> = (0..k).map(|o| schedule.op_timing(j, o).expect("prefix op")).collect();
        for (o, op) in job.ops.iter().enumerate() {
            let start = match o {
                0 => 0.0,
                _ if o < k => timing[o].dispatch,
                _ => break,
            };
            changes.push((start, op.machine, op.volume));
            let end = if o + 1 < k {
                Some(timing[o + 1].dispatch)
            } else if o + 1 == job.ops.len() && o < k {
                Some(timing[o].end)
            } else {
                None
            };
            if let Some(end) = end {
                changes.push((end, op.machine, -op.volume));
            }
        }
    }
    changes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut load = vec![0.0; m];
    let mut peak = vec![0.0f64; m];
    let mut overflows = Vec::new();
    let mut reported = vec![false; m];
    let mut i = 0;
    while i < changes.len() {
        let t = changes[i].0;
        while i < changes.len() && changes[i].0 <= t + tol(t) {
            load[changes[i].1] += changes[i].2;
            i += 1;
        }
        for k in 0..m {
            peak[k] = peak[k].max(load[k]);
            let cap = instance.capacity(k);
            if load[k] > cap + tol(cap) && !reported[k] {
                reported[k] = true;
                overflows.push(Violation {
                    code: ViolationCode::BufferOverflow,
                    detail: format!("B{} holds {} > capacity {}", k + 1, load[k], cap),
                    time: t,
                });
            }
        }
    }
    BufferSweep { peak, overflows }
}
