//! Deterministic, event-driven decision environment over an [`Instance`].
//!
//! Decisions happen at epochs. Dispatching a job (`Assign`) or pre-setting a
//! machine does not move the clock; `Noop` jumps to the next pending event
//! and fires everything due at that instant.
//!
//! Buffer accounting follows dispatch reservation: when a job is dispatched
//! to its next machine, the source buffer releases the job's reservation and
//! the destination buffer reserves the job's volume for that operation. The
//! reservation is held until the job is dispatched onward, or until its last
//! operation completes. A finished job waits in its buffer slot and leaves
//! its machine free, unless the buffer of its next machine cannot take it:
//! then it blocks the machine it finished on until space frees up.

mod observation;
mod reward;
mod rollout;
mod trajectory;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use observation::{observe, Observation};
pub use reward::{discounted_return, RewardConfig};
pub use rollout::{rollout, Rollout, MAX_STEPS_PER_OP};
pub use trajectory::{read_trajectory, replay_trajectory, write_trajectory, TrajectoryHeader, TrajectoryRecord};

use crate::error::{Error, Result};
use crate::eval::{IntervalKind, Kpis, Schedule, ScheduledInterval};
use crate::model::{self, Instance, SetupId, TIME_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Features {
    /// Allow setting up idle machines ahead of the next assignment.
    #[serde(default)]
    pub presetup: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Assign { job: usize },
    Presetup { machine: usize, setup: SetupId },
    Noop,
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Assign { job } => write!(f, "ASSIGN(J{})", job + 1),
            Action::Presetup { machine, setup } => write!(f, "PRESETUP(M{}, {setup})", machine + 1),
            Action::Noop => write!(f, "NOOP"),
        }
    }
}

/// Flat index layout: `0..n` assign job, `n` no-op, then one slot per
/// (machine, setup) pair when pre-setup is enabled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpace {
    n_jobs: usize,
    presetup_offsets: Vec<usize>,
    size: usize,
}

impl ActionSpace {
    pub fn new(instance: &Instance, features: Features) -> Self {
        let n = instance.n_jobs();
        let mut size = n + 1;
        let mut presetup_offsets = Vec::new();
        if features.presetup {
            for m in &instance.machines {
                presetup_offsets.push(size);
                size += m.setup_count();
            }
        }
        ActionSpace { n_jobs: n, presetup_offsets, size }
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn noop_index(&self) -> usize {
        self.n_jobs
    }

    pub fn index(&self, action: Action) -> Option<usize> {
        match action {
            Action::Assign { job } => (job < self.n_jobs).then_some(job),
            Action::Noop => Some(self.n_jobs),
            Action::Presetup { machine, setup } => {
                let off = *self.presetup_offsets.get(machine)?;
                let end = self.presetup_offsets.get(machine + 1).copied().unwrap_or(self.size);
                (off + setup.0 < end).then_some(off + setup.0)
            }
        }
    }

    pub fn action(&self, index: usize) -> Option<Action> {
        if index < self.n_jobs {
            return Some(Action::Assign { job: index });
        }
        if index == self.n_jobs {
            return Some(Action::Noop);
        }
        if index >= self.size {
            return None;
        }
        let machine = self.presetup_offsets.iter().rposition(|&o| o <= index)?;
        Some(Action::Presetup { machine, setup: SetupId(index - self.presetup_offsets[machine]) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "at", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum JobLocation {
    InBuffer { machine: usize },
    InTransit { to: usize, arrive_at: f64 },
    OnMachine { machine: usize },
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub next_op: usize,
    pub location: JobLocation,
    pub completion_time: Option<f64>,
    /// When the job last became ready to be dispatched.
    pub ready_since: f64,
    /// Volume currently reserved in the buffer the job belongs to.
    pub reserved: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineStatus {
    pub current_job: Option<usize>,
    pub current_setup: SetupId,
    pub busy_until: Option<f64>,
    /// Finished job that cannot move on because its next buffer is full.
    pub blocked_by: Option<usize>,
    /// Busy with a pre-setup only.
    pub presetting: bool,
}

impl MachineStatus {
    pub fn remaining_time(&self, clock: f64) -> f64 {
        match (self.current_job, self.busy_until) {
            (Some(_), Some(t)) => (t - clock).max(0.0),
            _ => 0.0,
        }
    }

    pub fn is_available(&self) -> bool {
        self.current_job.is_none() && !self.presetting && self.blocked_by.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    OpComplete { job: usize, machine: usize },
    SetupComplete { machine: usize },
}

impl EventKind {
    fn machine(&self) -> usize {
        match *self {
            EventKind::OpComplete { machine, .. } | EventKind::SetupComplete { machine } => machine,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Counters the environment keeps for its own KPI report.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvStats {
    pub total_tardiness: f64,
    pub tardy_jobs: usize,
    pub blocked_minutes: f64,
    pub peak_buffer: Vec<f64>,
    pub setup_time_total: f64,
    pub machine_busy: Vec<f64>,
    pub last_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub clock: f64,
    pub machines: Vec<MachineStatus>,
    pub jobs: Vec<JobStatus>,
    pub buffer_load: Vec<f64>,
    /// Pending events ordered by (time, machine).
    pub events: Vec<Event>,
    pub done: bool,
    pub deadlocked: bool,
    pub intervals: Vec<ScheduledInterval>,
    pub stats: EnvStats,
}

impl EnvState {
    pub fn initial(instance: &Instance) -> Result<Self> {
        instance.validate()?;
        let m = instance.n_machines();
        let mut buffer_load = vec![0.0; m];
        let jobs = instance
            .jobs
            .iter()
            .map(|job| {
                let first = &job.ops[0];
                buffer_load[first.machine] += first.volume;
                JobStatus {
                    next_op: 0,
                    location: JobLocation::InBuffer { machine: first.machine },
                    completion_time: None,
                    ready_since: 0.0,
                    reserved: first.volume,
                }
            })
            .collect();
        let machines = (0..m)
            .map(|_| MachineStatus {
                current_job: None,
                current_setup: SetupId::NEUTRAL,
                busy_until: None,
                blocked_by: None,
                presetting: false,
            })
            .collect();
        let mut state = EnvState {
            clock: 0.0,
            machines,
            jobs,
            buffer_load,
            events: Vec::new(),
            done: false,
            deadlocked: false,
            intervals: Vec::new(),
            stats: EnvStats { peak_buffer: vec![0.0; m], machine_busy: vec![0.0; m], ..Default::default() },
        };
        state.settle(instance);
        Ok(state)
    }

    pub fn all_done(&self) -> bool {
        self.jobs.iter().all(|j| j.location == JobLocation::Done)
    }

    pub fn next_event_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }

    fn push_event(&mut self, event: Event) {
        let pos = self
            .events
            .iter()
            .position(|e| e.time > event.time + TIME_EPS || ((e.time - event.time).abs() <= TIME_EPS && e.kind.machine() > event.kind.machine()))
            .unwrap_or(self.events.len());
        self.events.insert(pos, event);
    }

    /// Why `Assign(job)` is not possible right now, if it is not.
    fn assign_blocker(&self, instance: &Instance, job: usize) -> Option<String> {
        let status = self.jobs.get(job)?;
        let JobLocation::InBuffer { .. } = status.location else {
            return Some(format!("job J{} is not waiting in a buffer", job + 1));
        };
        let op = &instance.jobs[job].ops[status.next_op];
        let target = &self.machines[op.machine];
        if target.current_job.is_some() || target.presetting {
            return Some(format!("machine M{} is busy", op.machine + 1));
        }
        if target.blocked_by.is_some_and(|b| b != job) {
            return Some(format!("machine M{} is blocked by a finished job", op.machine + 1));
        }
        if !self.next_buffer_fits(instance, job) {
            return Some(format!("buffer B{} lacks capacity", op.machine + 1));
        }
        None
    }

    fn presetup_blocker(&self, instance: &Instance, machine: usize, setup: SetupId) -> Option<String> {
        let Some(m) = self.machines.get(machine) else {
            return Some("unknown machine".into());
        };
        if !instance.machines[machine].has_setup(setup) {
            return Some(format!("machine M{} has no setup {setup}", machine + 1));
        }
        if !m.is_available() {
            return Some(format!("machine M{} is not idle", machine + 1));
        }
        if m.current_setup == setup {
            return Some(format!("machine M{} is already in {setup}", machine + 1));
        }
        None
    }

    pub fn any_assign_eligible(&self, instance: &Instance) -> bool {
        (0..self.jobs.len()).any(|j| self.assign_blocker(instance, j).is_none())
    }

    /// Boolean mask over the action space. Empty once the episode is over.
    pub fn eligible_actions(&self, instance: &Instance, space: &ActionSpace) -> Vec<bool> {
        let mut mask = vec![false; space.len()];
        if self.done {
            return mask;
        }
        for (j, slot) in mask.iter_mut().enumerate().take(self.jobs.len()) {
            *slot = self.assign_blocker(instance, j).is_none();
        }
        mask[space.noop_index()] = !self.events.is_empty();
        for i in space.noop_index() + 1..space.len() {
            if let Some(Action::Presetup { machine, setup }) = space.action(i) {
                mask[i] = self.presetup_blocker(instance, machine, setup).is_none();
            }
        }
        mask
    }

    /// Whether the buffer in front of the next machine of `job` has room for it.
    fn next_buffer_fits(&self, instance: &Instance, job: usize) -> bool {
        let status = &self.jobs[job];
        let JobLocation::InBuffer { machine: here } = status.location else { return true };
        let op = &instance.jobs[job].ops[status.next_op];
        let base = if here == op.machine { self.buffer_load[here] - status.reserved } else { self.buffer_load[op.machine] };
        base + op.volume <= instance.capacity(op.machine) + TIME_EPS
    }

    fn refresh_blocking(&mut self, instance: &Instance) {
        for m in &mut self.machines {
            m.blocked_by = None;
        }
        for j in 0..self.jobs.len() {
            let status = &self.jobs[j];
            if let JobLocation::InBuffer { machine: here } = status.location {
                if status.next_op > 0 && self.machines[here].blocked_by.is_none() && !self.next_buffer_fits(instance, j) {
                    self.machines[here].blocked_by = Some(j);
                }
            }
        }
    }

    fn settle(&mut self, instance: &Instance) {
        self.refresh_blocking(instance);
        if !self.all_done() && self.events.is_empty() && !self.any_assign_eligible(instance) {
            self.deadlocked = true;
            self.done = true;
            self.record_peak();
        } else if self.all_done() {
            self.done = true;
        }
    }

    fn record_peak(&mut self) {
        for (peak, load) in self.stats.peak_buffer.iter_mut().zip(&self.buffer_load) {
            *peak = peak.max(*load);
        }
    }

    fn dispatch(&mut self, instance: &Instance, job: usize) {
        let status = &self.jobs[job];
        let JobLocation::InBuffer { machine: here } = status.location else { unreachable!("checked by mask") };
        let op_index = status.next_op;
        let spec = &instance.jobs[job];
        let op = &spec.ops[op_index];
        let target = op.machine;

        self.buffer_load[here] -= status.reserved;
        self.buffer_load[target] += op.volume;

        let transport = instance.transport[here][target];
        let machine = &instance.machines[target];
        let setup = machine.setup_time[self.machines[target].current_setup.0][op.setup.0];
        let total = model::total_processing_time(spec.batch_size, op.unit_time, transport, setup)
            .expect("validated instance");
        let start = self.clock;
        let proc_start = start + transport + setup;
        let end = start + total;

        let mut push = |kind, from: f64, to: f64| {
            if to - from > 0.0 || kind == IntervalKind::Process {
                self.intervals.push(ScheduledInterval {
                    job: Some(job),
                    op_index: Some(op_index),
                    machine: target,
                    kind,
                    start: from,
                    end: to,
                    setup: op.setup,
                });
            }
        };
        push(IntervalKind::Transport, start, start + transport);
        push(IntervalKind::Setup, start + transport, proc_start);
        push(IntervalKind::Process, proc_start, end);

        self.stats.setup_time_total += setup;
        self.stats.machine_busy[target] += end - (start + transport);
        self.stats.last_end = self.stats.last_end.max(end);

        let m = &mut self.machines[target];
        m.current_job = Some(job);
        m.busy_until = Some(end);
        m.current_setup = op.setup;
        m.blocked_by = None;

        let status = &mut self.jobs[job];
        status.reserved = op.volume;
        status.location = if transport > 0.0 {
            JobLocation::InTransit { to: target, arrive_at: start + transport }
        } else {
            JobLocation::OnMachine { machine: target }
        };
        self.push_event(Event { time: end, kind: EventKind::OpComplete { job, machine: target } });
    }

    fn presetup(&mut self, instance: &Instance, machine: usize, setup: SetupId) {
        let from = self.machines[machine].current_setup;
        let dur = instance.machines[machine].setup_time[from.0][setup.0];
        self.machines[machine].current_setup = setup;
        let end = self.clock + dur;
        // zero-length changes are still recorded so the setup history replays
        self.intervals.push(ScheduledInterval {
            job: None,
            op_index: None,
            machine,
            kind: IntervalKind::Setup,
            start: self.clock,
            end,
            setup,
        });
        if dur <= 0.0 {
            return;
        }
        self.stats.setup_time_total += dur;
        self.stats.machine_busy[machine] += dur;
        self.stats.last_end = self.stats.last_end.max(end);
        let m = &mut self.machines[machine];
        m.presetting = true;
        m.busy_until = Some(end);
        self.push_event(Event { time: end, kind: EventKind::SetupComplete { machine } });
    }

    /// Advances to the next event time and fires all events due then.
    fn advance(&mut self, instance: &Instance, log: &mut Vec<String>) -> Advance {
        let Some(next) = self.next_event_time() else { return Advance::default() };
        self.record_peak();
        let dt = next - self.clock;
        let blocked = self.machines.iter().filter(|m| m.blocked_by.is_some()).count() as f64;
        self.stats.blocked_minutes += blocked * dt;
        self.clock = next;

        let mut out = Advance { dt, blocked_minutes: blocked * dt, ..Default::default() };
        let due = self.events.iter().take_while(|e| e.time <= next + TIME_EPS).count();
        let fired: Vec<Event> = self.events.drain(..due).collect();
        for event in fired {
            match event.kind {
                EventKind::OpComplete { job, machine } => {
                    let spec = &instance.jobs[job];
                    let m = &mut self.machines[machine];
                    m.current_job = None;
                    m.busy_until = None;
                    let status = &mut self.jobs[job];
                    status.next_op += 1;
                    status.ready_since = self.clock;
                    if status.next_op == spec.ops.len() {
                        status.location = JobLocation::Done;
                        status.completion_time = Some(self.clock);
                        self.buffer_load[machine] -= status.reserved;
                        status.reserved = 0.0;
                        let tardy = (self.clock - spec.deadline).max(0.0);
                        if tardy > TIME_EPS {
                            self.stats.tardy_jobs += 1;
                            self.stats.total_tardiness += tardy;
                        }
                        out.completed += 1;
                        out.tardiness += tardy;
                        log.push(format!("t={} J{} completed", self.clock, job + 1));
                    } else {
                        status.location = JobLocation::InBuffer { machine };
                        log.push(format!("t={} J{} finished op {} on M{}", self.clock, job + 1, status.next_op, machine + 1));
                    }
                }
                EventKind::SetupComplete { machine } => {
                    let m = &mut self.machines[machine];
                    m.presetting = false;
                    m.busy_until = None;
                    log.push(format!("t={} M{} set up", self.clock, machine + 1));
                }
            }
        }
        for status in &mut self.jobs {
            if let JobLocation::InTransit { to, arrive_at } = status.location {
                if arrive_at <= self.clock + TIME_EPS {
                    status.location = JobLocation::OnMachine { machine: to };
                }
            }
        }
        out
    }

    /// Clock-shift invariant key: two states with the same key have the same
    /// future under the same action sequence (up to a time offset).
    pub fn canonical_key(&self) -> Vec<i64> {
        let q = |x: f64| (x * 1e6).round() as i64;
        let mut key = Vec::with_capacity(4 * self.jobs.len() + 4 * self.machines.len() + 3 * self.events.len());
        for j in &self.jobs {
            key.push(j.next_op as i64);
            let (tag, at) = match j.location {
                JobLocation::InBuffer { machine } => (0, machine),
                JobLocation::InTransit { to, .. } | JobLocation::OnMachine { machine: to } => (1, to),
                JobLocation::Done => (2, 0),
            };
            key.push(tag);
            key.push(at as i64);
        }
        for m in &self.machines {
            key.push(m.current_setup.0 as i64);
            key.push(m.current_job.map_or(-1, |j| j as i64));
            key.push(m.blocked_by.map_or(-1, |j| j as i64));
            key.push(m.presetting as i64);
        }
        for e in &self.events {
            key.push(q(e.time - self.clock));
            match e.kind {
                EventKind::OpComplete { job, machine } => {
                    key.push(job as i64);
                    key.push(machine as i64);
                }
                EventKind::SetupComplete { machine } => {
                    key.push(-1);
                    key.push(machine as i64);
                }
            }
        }
        key.extend(self.buffer_load.iter().map(|&l| q(l)));
        key
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Advance {
    dt: f64,
    blocked_minutes: f64,
    completed: usize,
    tardiness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub events: Vec<String>,
    pub mask: Vec<bool>,
    pub deadlock: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// An environment bound to one instance. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Env {
    instance: Arc<Instance>,
    config: RewardConfig,
    features: Features,
    space: ActionSpace,
    state: EnvState,
}

impl Env {
    pub fn new(instance: Arc<Instance>, config: RewardConfig, features: Features) -> Result<Self> {
        config.validate()?;
        let state = EnvState::initial(&instance)?;
        let space = ActionSpace::new(&instance, features);
        Ok(Env { instance, config, features, space, state })
    }

    /// Resumes from a previously captured state of the same instance.
    pub fn from_state(instance: Arc<Instance>, config: RewardConfig, features: Features, state: EnvState) -> Result<Self> {
        config.validate()?;
        if state.jobs.len() != instance.n_jobs() || state.machines.len() != instance.n_machines() {
            return Err(Error::Mismatch("state does not belong to this instance".into()));
        }
        let space = ActionSpace::new(&instance, features);
        Ok(Env { instance, config, features, space, state })
    }

    pub fn reset(&mut self) -> Observation {
        self.state = EnvState::initial(&self.instance).expect("instance validated at construction");
        self.observe()
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn instance_arc(&self) -> &Arc<Instance> {
        &self.instance
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn features(&self) -> Features {
        self.features
    }

    pub fn action_space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn clock(&self) -> f64 {
        self.state.clock
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    pub fn observe(&self) -> Observation {
        observe(&self.state, &self.instance)
    }

    pub fn eligible_actions(&self) -> Vec<bool> {
        self.state.eligible_actions(&self.instance, &self.space)
    }

    pub fn check_action(&self, action: Action) -> Result<()> {
        let masked = |reason: String| Err(Error::MaskedAction { action: action.to_string(), reason });
        if self.state.done {
            return masked("episode is over".into());
        }
        if self.space.index(action).is_none() {
            return masked("outside the action space".into());
        }
        match action {
            Action::Assign { job } => match self.state.assign_blocker(&self.instance, job) {
                Some(reason) => masked(reason),
                None => Ok(()),
            },
            Action::Presetup { machine, setup } => match self.state.presetup_blocker(&self.instance, machine, setup) {
                Some(reason) => masked(reason),
                None => Ok(()),
            },
            Action::Noop if self.state.events.is_empty() => masked("no pending event".into()),
            Action::Noop => Ok(()),
        }
    }

    /// Applies one action. A masked action is rejected and leaves the state untouched.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        self.check_action(action)?;
        let state = &mut self.state;
        let mut log = Vec::new();
        let mut reward = 0.0;
        match action {
            Action::Assign { job } => {
                state.dispatch(&self.instance, job);
                log.push(format!("t={} J{} dispatched", state.clock, job + 1));
            }
            Action::Presetup { machine, setup } => state.presetup(&self.instance, machine, setup),
            Action::Noop => {
                let adv = state.advance(&self.instance, &mut log);
                reward += self.config.advance_reward(adv.dt, adv.blocked_minutes, adv.completed, adv.tardiness);
            }
        }
        state.settle(&self.instance);
        if state.deadlocked {
            reward -= self.config.w_deadlock;
            log.push(format!("t={} deadlock", state.clock));
        }
        let mask = self.eligible_actions();
        Ok(StepResult {
            observation: self.observe(),
            reward,
            done: self.state.done,
            info: StepInfo { events: log, mask, deadlock: self.state.deadlocked },
        })
    }

    pub fn step_index(&mut self, index: usize) -> Result<StepResult> {
        let action = self.space.action(index).ok_or_else(|| Error::MaskedAction {
            action: format!("#{index}"),
            reason: "outside the action space".into(),
        })?;
        self.step(action)
    }

    pub fn schedule(&self) -> Schedule {
        Schedule {
            instance_hash: self.instance.content_hash(),
            intervals: self.state.intervals.clone(),
            completion: self.state.jobs.iter().map(|j| j.completion_time).collect(),
        }
    }

    /// KPIs from the environment's own counters.
    pub fn kpis(&self) -> Kpis {
        let s = &self.state.stats;
        let makespan = s.last_end;
        Kpis {
            makespan,
            total_tardiness: s.total_tardiness,
            tardy_jobs: s.tardy_jobs,
            peak_buffer: s.peak_buffer.clone(),
            machine_utilization: s
                .machine_busy
                .iter()
                .map(|&b| if makespan > 0.0 { b / makespan } else { 0.0 })
                .collect(),
            setup_time_total: s.setup_time_total,
            completed_jobs: self.state.jobs.iter().filter(|j| j.location == JobLocation::Done).count(),
        }
    }
}

#[cfg(test)]
mod tests;
