use serde::{Deserialize, Serialize};

use crate::model::SetupId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum IntervalKind {
    Transport,
    Setup,
    Process,
}

impl IntervalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            IntervalKind::Transport => "TRANSPORT",
            IntervalKind::Setup => "SETUP",
            IntervalKind::Process => "PROCESS",
        }
    }
}

/// One segment on a machine lane. Setup segments without a job are
/// pre-setups performed while the machine was otherwise idle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledInterval {
    pub job: Option<usize>,
    pub op_index: Option<usize>,
    pub machine: usize,
    pub kind: IntervalKind,
    pub start: f64,
    pub end: f64,
    /// Setup the machine is in (or being brought into) during this segment.
    pub setup: SetupId,
}

impl ScheduledInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub instance_hash: String,
    pub intervals: Vec<ScheduledInterval>,
    /// Completion time per job; `None` while the job is unfinished.
    pub completion: Vec<Option<f64>>,
}

/// Timing of one operation reassembled from its segments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpTiming {
    pub dispatch: f64,
    pub transport: f64,
    pub setup: f64,
    pub proc_start: f64,
    pub end: f64,
    pub process_segments: usize,
}

impl Schedule {
    /// All segments of `(job, op)` in start order.
    pub fn op_segments(&self, job: usize, op: usize) -> impl Iterator<Item = &ScheduledInterval> {
        self.intervals.iter().filter(move |iv| iv.job == Some(job) && iv.op_index == Some(op))
    }

    pub fn op_timing(&self, job: usize, op: usize) -> Option<OpTiming> {
        let mut t = OpTiming {
            dispatch: f64::INFINITY,
            transport: 0.0,
            setup: 0.0,
            proc_start: f64::INFINITY,
            end: f64::NEG_INFINITY,
            process_segments: 0,
        };
        let mut any = false;
        for iv in self.op_segments(job, op) {
            any = true;
            t.dispatch = t.dispatch.min(iv.start);
            match iv.kind {
                IntervalKind::Transport => t.transport += iv.duration(),
                IntervalKind::Setup => t.setup += iv.duration(),
                IntervalKind::Process => {
                    t.process_segments += 1;
                    t.proc_start = t.proc_start.min(iv.start);
                    t.end = t.end.max(iv.end);
                }
            }
        }
        (any && t.process_segments > 0).then_some(t)
    }

    /// Number of leading operations of `job` that have a process segment.
    pub fn scheduled_ops(&self, job: usize) -> usize {
        let mut k = 0;
        while self.op_segments(job, k).any(|iv| iv.kind == IntervalKind::Process) {
            k += 1;
        }
        k
    }

    pub fn end_time(&self) -> f64 {
        self.intervals.iter().map(|iv| iv.end).fold(0.0, f64::max)
    }
}
