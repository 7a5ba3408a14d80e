//! Single-file JSON store. Order sets are keyed by instance content hash,
//! plans by sequential number. Every status transition rewrites the file
//! atomically (temp file plus rename).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use batchshop::env::{Action, EnvState};
use batchshop::eval::{ScheduleDoc, Violation};
use batchshop::io::InstanceDoc;
use batchshop::policies::{CurvePoint, PolicyKind, PolicyShape};
use batchshop::Result;
use serde::{Deserialize, Serialize};

use crate::planner::{Candidate, Goal, PolicySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSet {
    pub id: String,
    pub instance_hash: String,
    pub n_jobs: usize,
    pub n_machines: usize,
    pub total_ops: usize,
    pub instance: InstanceDoc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanStatus {
    Pending,
    Running,
    Draft,
    Accepted,
    Overridden,
    Failed,
}

impl PlanStatus {
    pub fn is_finished(self) -> bool {
        !matches!(self, PlanStatus::Pending | PlanStatus::Running)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub done: usize,
    pub total: usize,
}

/// Where a replanned plan came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplanOrigin {
    pub plan_id: u64,
    pub clock: f64,
    /// Candidate (or "OVERRIDE") whose decisions were replayed.
    pub basis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Accept { policy: String },
    Override { schedule: ScheduleDoc },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub plan_id: u64,
    pub order_set_id: String,
    pub goal: Goal,
    pub policies: Vec<PolicySpec>,
    pub seed: u64,
    pub status: PlanStatus,
    pub progress: Progress,
    pub candidates: Vec<Candidate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<ReplanOrigin>,
    /// Decisions replayed from the base plan before this plan's own.
    #[serde(default)]
    pub prefix_actions: Vec<Action>,
    /// Environment state the candidates start from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_state: Option<EnvState>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainingStatus {
    Training,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub policy_id: String,
    pub kind: String,
    pub order_set_id: String,
    pub goal: Goal,
    pub status: TrainingStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<PolicyShape>,
    #[serde(default)]
    pub curve: Vec<CurvePoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyKind>,
}

impl PolicyRecord {
    /// Listing view without the table or weights.
    pub fn summary(&self) -> PolicyRecord {
        PolicyRecord { policy: None, curve: self.curve.last().cloned().into_iter().collect(), ..self.clone() }
    }
}

/// One decision, never edited after it is written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub plan_id: u64,
    pub decision: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    pub accepted: bool,
    #[serde(default)]
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub makespan: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct StoreData {
    pub order_sets: BTreeMap<String, OrderSet>,
    /// Client token to order set id.
    pub tokens: BTreeMap<String, String>,
    pub plans: BTreeMap<u64, PlanRecord>,
    pub policies: BTreeMap<String, PolicyRecord>,
    pub audit: Vec<AuditRecord>,
    pub next_plan: u64,
    pub next_policy: u64,
}

#[derive(Debug)]
pub struct Store {
    data: RwLock<StoreData>,
    path: Option<PathBuf>,
}

const STORE_FILE: &str = "store.json";

impl Store {
    pub fn in_memory() -> Self {
        Store { data: RwLock::new(StoreData { next_plan: 1, next_policy: 1, ..Default::default() }), path: None }
    }

    /// Opens (or creates) the store in `dir`. Jobs that were running when
    /// the previous process stopped are marked failed.
    pub fn open(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(STORE_FILE);
        let mut data = if path.exists() {
            let text = std::fs::read_to_string(&path)?;
            serde_json::from_str(&text).map_err(|e| batchshop::Error::Parse(format!("{}: {e}", path.display())))?
        } else {
            StoreData { next_plan: 1, next_policy: 1, ..Default::default() }
        };
        for plan in data.plans.values_mut() {
            if !plan.status.is_finished() {
                plan.status = PlanStatus::Failed;
                plan.error = Some("interrupted by a restart".into());
            }
        }
        for policy in data.policies.values_mut() {
            if policy.status == TrainingStatus::Training {
                policy.status = TrainingStatus::Failed;
                policy.error = Some("interrupted by a restart".into());
            }
        }
        let store = Store { data: RwLock::new(data), path: Some(path) };
        store.persist(&store.data.read().unwrap())?;
        Ok(store)
    }

    pub fn read<T>(&self, f: impl FnOnce(&StoreData) -> T) -> T {
        f(&self.data.read().unwrap())
    }

    /// Applies `f` under the write lock and saves the result. If saving
    /// fails the in-memory change stays, and the error is returned.
    pub fn write<T>(&self, f: impl FnOnce(&mut StoreData) -> T) -> Result<T> {
        let mut data = self.data.write().unwrap();
        let out = f(&mut data);
        self.persist(&data)?;
        Ok(out)
    }

    /// Like `write` but without touching disk; for progress counters.
    pub fn write_volatile<T>(&self, f: impl FnOnce(&mut StoreData) -> T) -> T {
        f(&mut self.data.write().unwrap())
    }

    fn persist(&self, data: &StoreData) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(data).expect("store serializes"))?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }
}
