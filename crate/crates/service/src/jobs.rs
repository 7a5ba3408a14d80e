//! Background work: planning and training jobs. Each job owns its plan or
//! policy record until it finishes; request handlers only read it meanwhile.

use std::sync::Arc;

use batchshop::env::{Action, Env, Features};
use batchshop::model::Instance;
use batchshop::policies::{train_pg, train_q, ExactConfig, PgHyperparams, PolicyKind, PolicyShape, QHyperparams};

use crate::planner::{plan_candidate, Goal, Resolved};
use crate::store::{PlanStatus, Store, TrainingStatus};

pub(crate) struct PlanJob {
    pub plan_id: u64,
    pub instance: Arc<Instance>,
    pub goal: Goal,
    pub seed: u64,
    pub policies: Vec<Resolved>,
    pub prefix: Vec<Action>,
    pub exact: ExactConfig,
}

pub(crate) fn fail_plan(store: &Store, plan_id: u64, message: String) {
    let _ = store.write(|d| {
        if let Some(p) = d.plans.get_mut(&plan_id) {
            p.status = PlanStatus::Failed;
            p.error = Some(message);
        }
    });
}

pub(crate) fn run_plan(store: &Store, job: PlanJob) {
    let id = job.plan_id;
    let mut env = match Env::new(job.instance.clone(), job.goal.reward(), Features::default()) {
        Ok(env) => env,
        Err(e) => return fail_plan(store, id, e.to_string()),
    };
    for &action in &job.prefix {
        if let Err(e) = env.step(action) {
            return fail_plan(store, id, format!("replaying the base plan failed: {e}"));
        }
    }
    let start = env.state().clone();
    store.write_volatile(|d| {
        if let Some(p) = d.plans.get_mut(&id) {
            p.status = PlanStatus::Running;
            p.start_state = Some(start);
        }
    });
    let total = if env.is_done() { 0 } else { job.policies.len() };
    for policy in job.policies.iter().take(total) {
        let mut c = plan_candidate(&env, policy, job.goal, job.seed, &job.exact);
        if c.is_servable() {
            c.gantt = Some(format!("/plans/{id}/gantt.svg?policy={}", c.policy));
        }
        store.write_volatile(|d| {
            if let Some(p) = d.plans.get_mut(&id) {
                p.candidates.push(c);
                p.progress.done += 1;
            }
        });
    }
    let _ = store.write(|d| {
        if let Some(p) = d.plans.get_mut(&id) {
            p.progress.total = total;
            p.status = PlanStatus::Draft;
        }
    });
}

#[derive(Debug, Clone)]
pub(crate) enum Trainer {
    Q(QHyperparams),
    Pg(PgHyperparams),
}

pub(crate) fn run_training(store: &Store, policy_id: &str, instance: Arc<Instance>, goal: Goal, trainer: Trainer) {
    let features = Features::default();
    let result = match trainer {
        Trainer::Q(hp) => train_q(instance.clone(), goal.reward(), features, &hp).map(|t| (PolicyKind::TabularQ { table: t.table }, t.curve)),
        Trainer::Pg(hp) => train_pg(instance.clone(), goal.reward(), features, &hp).map(|t| (PolicyKind::Neural { params: t.policy }, t.curve)),
    };
    let _ = store.write(|d| {
        let Some(rec) = d.policies.get_mut(policy_id) else { return };
        match result {
            Ok((policy, curve)) => {
                rec.status = TrainingStatus::Ready;
                rec.shape = Some(PolicyShape::of(&instance, features));
                rec.curve = curve;
                rec.policy = Some(policy);
            }
            Err(e) => {
                rec.status = TrainingStatus::Failed;
                rec.error = Some(e.to_string());
            }
        }
    });
}

pub(crate) fn fail_training(store: &Store, policy_id: &str, message: String) {
    let _ = store.write(|d| {
        if let Some(rec) = d.policies.get_mut(policy_id) {
            rec.status = TrainingStatus::Failed;
            rec.error = Some(message);
        }
    });
}
