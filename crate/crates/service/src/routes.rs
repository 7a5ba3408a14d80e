use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use batchshop::env::{Action, Env, Features};
use batchshop::eval::{compute_kpis, render_gantt, validate_schedule, GanttFormat, Schedule, ScheduleDoc, ScheduledInterval};
use batchshop::io::{expand_orders, ArticleSpec, InstanceDoc, Order, ShopDoc};
use batchshop::model::Instance;
use batchshop::policies::{ExactConfig, PgHyperparams, QHyperparams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ApiError;
use crate::jobs::{fail_plan, fail_training, run_plan, run_training, PlanJob, Trainer};
use crate::planner::{actions_from_schedule, replay_to_clock, Goal, PolicySpec, Resolved};
use crate::store::{AuditRecord, Decision, OrderSet, PlanRecord, PlanStatus, PolicyRecord, Progress, ReplanOrigin, StoreData, TrainingStatus};
use crate::{AppState, API_VERSION};

type ApiResult<T> = Result<T, ApiError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed request: {e}")))
}

fn parse_id(raw: &str) -> ApiResult<u64> {
    raw.parse().map_err(|_| ApiError::not_found(format!("no plan '{raw}'")))
}

pub async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "api_version": API_VERSION }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrdersRequest {
    #[serde(default)]
    client_token: Option<String>,
    #[serde(default)]
    instance: Option<InstanceDoc>,
    #[serde(default)]
    shop: Option<ShopDoc>,
    #[serde(default)]
    articles: Option<Vec<ArticleSpec>>,
    #[serde(default)]
    orders: Option<Vec<Order>>,
}

#[derive(Debug, Serialize)]
struct OrdersResponse {
    order_set_id: String,
    instance_hash: String,
    n_jobs: usize,
    n_machines: usize,
    total_ops: usize,
}

fn order_set_id(instance: &Instance) -> String {
    format!("os-{}", &instance.content_hash()[..16])
}

fn build_instance(req: OrdersRequest) -> ApiResult<Instance> {
    let instance = match (req.instance, req.shop, req.articles, req.orders) {
        (Some(doc), None, None, None) => doc.into_instance()?,
        (None, Some(shop), Some(articles), Some(orders)) => {
            if orders.is_empty() {
                return Err(ApiError::bad_request("empty order list"));
            }
            shop.with_jobs(expand_orders(&articles, &orders)?)?
        }
        _ => return Err(ApiError::bad_request("send either 'instance', or 'shop' with 'articles' and 'orders'")),
    };
    if instance.n_jobs() == 0 {
        return Err(ApiError::bad_request("empty order list: the instance has no jobs"));
    }
    Ok(instance)
}

/// Stores the order set (content-addressed). Returns its id and whether it was new.
fn insert_order_set(state: &AppState, instance: &Instance, token: Option<String>) -> ApiResult<(OrderSet, bool)> {
    let set = OrderSet {
        id: order_set_id(instance),
        instance_hash: instance.content_hash(),
        n_jobs: instance.n_jobs(),
        n_machines: instance.n_machines(),
        total_ops: instance.total_ops(),
        instance: InstanceDoc::from_instance(instance),
    };
    state
        .store
        .write(|d| {
            if let Some(token) = &token {
                match d.tokens.get(token) {
                    Some(existing) if *existing != set.id => {
                        return Err(ApiError::conflict(format!("client token already used for order set {existing}")));
                    }
                    _ => {
                        d.tokens.insert(token.clone(), set.id.clone());
                    }
                }
            }
            let fresh = !d.order_sets.contains_key(&set.id);
            d.order_sets.entry(set.id.clone()).or_insert_with(|| set.clone());
            Ok((set, fresh))
        })
        .map_err(ApiError::from)?
}

pub async fn submit_orders(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: OrdersRequest = parse(&body)?;
    let token = req.client_token.clone();
    let instance = build_instance(req)?;
    let (set, fresh) = insert_order_set(&state, &instance, token)?;
    let status = if fresh { StatusCode::CREATED } else { StatusCode::OK };
    let body = OrdersResponse {
        order_set_id: set.id,
        instance_hash: set.instance_hash,
        n_jobs: set.n_jobs,
        n_machines: set.n_machines,
        total_ops: set.total_ops,
    };
    Ok((status, Json(body)).into_response())
}

pub async fn get_orders(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<OrderSet>> {
    state.store.read(|d| d.order_sets.get(&id).cloned()).map(Json).ok_or_else(|| ApiError::not_found(format!("no order set '{id}'")))
}

fn load_order_set(data: &StoreData, id: &str) -> ApiResult<Arc<Instance>> {
    let set = data.order_sets.get(id).ok_or_else(|| ApiError::not_found(format!("no order set '{id}'")))?;
    Ok(Arc::new(set.instance.clone().into_instance()?))
}

fn resolve_policies(state: &AppState, data: &StoreData, instance: &Instance, specs: &[PolicySpec]) -> ApiResult<Vec<Resolved>> {
    if specs.is_empty() {
        return Err(ApiError::bad_request("at least one policy is required"));
    }
    let mut out = Vec::new();
    for spec in specs {
        let resolved = match spec {
            PolicySpec::Exact => {
                let ops = instance.total_ops();
                if ops > state.config.exact_max_ops {
                    return Err(ApiError::bad_request(format!(
                        "EXACT is limited to instances with at most {} operations; this one has {ops}",
                        state.config.exact_max_ops
                    )));
                }
                Resolved::Exact
            }
            PolicySpec::Trained(id) => {
                let rec = data.policies.get(id).ok_or_else(|| ApiError::not_found(format!("unknown policy id '{id}'")))?;
                let policy = match (&rec.status, &rec.policy) {
                    (TrainingStatus::Ready, Some(p)) => p.clone(),
                    (TrainingStatus::Failed, _) => return Err(ApiError::conflict(format!("policy '{id}' failed to train"))),
                    _ => return Err(ApiError::conflict(format!("policy '{id}' is still training"))),
                };
                policy.check_compatible(instance, Features::default())?;
                Resolved::Rollout { label: spec.label(), policy }
            }
            other => Resolved::Rollout { label: other.label(), policy: other.heuristic().expect("heuristic spec") },
        };
        out.push(resolved);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    #[serde(default)]
    order_set_id: Option<String>,
    #[serde(default)]
    instance: Option<InstanceDoc>,
    #[serde(default)]
    goal: Goal,
    #[serde(default)]
    policies: Vec<PolicySpec>,
    #[serde(default)]
    seed: u64,
}

struct NewPlan {
    order_set_id: String,
    instance: Arc<Instance>,
    goal: Goal,
    specs: Vec<PolicySpec>,
    seed: u64,
    origin: Option<ReplanOrigin>,
    prefix: Vec<Action>,
    warnings: Vec<String>,
    finished: bool,
}

fn enqueue_plan(state: &AppState, plan: NewPlan) -> ApiResult<Response> {
    plan.goal.validate()?;
    let (plan_id, resolved) = state
        .store
        .write(|d| {
            let resolved = if plan.finished { Vec::new() } else { resolve_policies(state, d, &plan.instance, &plan.specs)? };
            let plan_id = d.next_plan;
            d.next_plan += 1;
            d.plans.insert(
                plan_id,
                PlanRecord {
                    plan_id,
                    order_set_id: plan.order_set_id.clone(),
                    goal: plan.goal,
                    policies: plan.specs.clone(),
                    seed: plan.seed,
                    status: PlanStatus::Pending,
                    progress: Progress { done: 0, total: resolved.len() },
                    candidates: Vec::new(),
                    decision: None,
                    origin: plan.origin.clone(),
                    prefix_actions: plan.prefix.clone(),
                    start_state: None,
                    warnings: plan.warnings.clone(),
                    error: None,
                },
            );
            Ok::<_, ApiError>((plan_id, resolved))
        })
        .map_err(ApiError::from)??;
    let job = PlanJob {
        plan_id,
        instance: plan.instance,
        goal: plan.goal,
        seed: plan.seed,
        policies: resolved,
        prefix: plan.prefix,
        exact: ExactConfig { time_budget: Some(state.config.exact_budget), ..ExactConfig::default() },
    };
    let (store, store2) = (state.store.clone(), state.store.clone());
    state.spawn_job(move || run_plan(&store, job), move || fail_plan(&store2, plan_id, "planning job panicked".into()));
    Ok((StatusCode::ACCEPTED, Json(json!({ "plan_id": plan_id, "status": PlanStatus::Pending })))
        .into_response())
}

pub async fn create_plan(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: PlanRequest = parse(&body)?;
    let (order_set_id, instance) = match (req.order_set_id, req.instance) {
        (Some(id), None) => {
            let instance = state.store.read(|d| load_order_set(d, &id))?;
            (id, instance)
        }
        (None, Some(doc)) => {
            let instance = doc.into_instance()?;
            if instance.n_jobs() == 0 {
                return Err(ApiError::bad_request("empty order list: the instance has no jobs"));
            }
            let (set, _) = insert_order_set(&state, &instance, None)?;
            (set.id, Arc::new(instance))
        }
        _ => return Err(ApiError::bad_request("send exactly one of 'order_set_id' or 'instance'")),
    };
    enqueue_plan(
        &state,
        NewPlan {
            order_set_id,
            instance,
            goal: req.goal,
            specs: req.policies,
            seed: req.seed,
            origin: None,
            prefix: Vec::new(),
            warnings: Vec::new(),
            finished: false,
        },
    )
}

fn plan_snapshot(state: &AppState, raw: &str) -> ApiResult<PlanRecord> {
    let id = parse_id(raw)?;
    state.store.read(|d| d.plans.get(&id).cloned()).ok_or_else(|| ApiError::not_found(format!("no plan '{raw}'")))
}

pub async fn get_plan(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PlanRecord>> {
    plan_snapshot(&state, &id).map(Json)
}

/// Edited schedule; a served schedule document is accepted as is (its
/// KPIs are ignored and recomputed).
#[derive(Debug, Deserialize)]
pub struct EditedSchedule {
    #[serde(default)]
    instance_hash: String,
    intervals: Vec<ScheduledInterval>,
    completion: Vec<Option<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "decision", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DecisionRequest {
    Accept { policy: String },
    Override { schedule: EditedSchedule },
}

fn audit(d: &mut StoreData, plan_id: u64, decision: &str, policy: Option<String>, accepted: bool, violations: Vec<batchshop::eval::Violation>, makespan: Option<f64>) {
    let seq = d.audit.len() as u64 + 1;
    d.audit.push(AuditRecord { seq, plan_id, decision: decision.into(), policy, accepted, violations, makespan });
}

pub async fn decide_plan(State(state): State<AppState>, Path(raw): Path<String>, body: Bytes) -> ApiResult<Json<PlanRecord>> {
    let plan_id = parse_id(&raw)?;
    let req: DecisionRequest = parse(&body)?;
    let plan = plan_snapshot(&state, &raw)?;
    let instance = state.store.read(|d| load_order_set(d, &plan.order_set_id))?;
    let (decision, status) = match req {
        DecisionRequest::Accept { policy } => (Decision::Accept { policy }, PlanStatus::Accepted),
        DecisionRequest::Override { schedule } => {
            let schedule = Schedule { instance_hash: schedule.instance_hash, intervals: schedule.intervals, completion: schedule.completion };
            let violations = validate_schedule(&instance, &schedule)?;
            if !violations.is_empty() {
                state
                    .store
                    .write(|d| audit(d, plan_id, "OVERRIDE", None, false, violations.clone(), None))
                    .map_err(ApiError::from)?;
                return Err(batchshop::Error::InvalidSchedule(violations).into());
            }
            let kpis = compute_kpis(&instance, &schedule)?;
            let mut doc = ScheduleDoc::new(&schedule, kpis);
            doc.instance_hash = instance.content_hash();
            (Decision::Override { schedule: doc }, PlanStatus::Overridden)
        }
    };
    state
        .store
        .write(|d| {
            let plan = d.plans.get_mut(&plan_id).ok_or_else(|| ApiError::not_found(format!("no plan '{raw}'")))?;
            if plan.status != PlanStatus::Draft {
                return Err(ApiError::conflict(format!("plan {plan_id} is {:?}, decisions need a DRAFT plan", plan.status)));
            }
            let (kind, policy, makespan) = match &decision {
                Decision::Accept { policy } => {
                    let c = plan
                        .candidates
                        .iter()
                        .find(|c| &c.policy == policy && c.is_servable())
                        .ok_or_else(|| ApiError::unprocessable("unknown_candidate", format!("plan {plan_id} has no servable '{policy}' schedule")))?;
                    ("ACCEPT", Some(policy.clone()), c.schedule.as_ref().map(|s| s.kpis.makespan))
                }
                Decision::Override { schedule } => ("OVERRIDE", None, Some(schedule.kpis.makespan)),
            };
            plan.decision = Some(decision);
            plan.status = status;
            let snapshot = plan.clone();
            audit(d, plan_id, kind, policy, true, Vec::new(), makespan);
            Ok(snapshot)
        })
        .map_err(ApiError::from)?
        .map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplanRequest {
    clock: f64,
    /// Candidate whose decisions are replayed; defaults to the accepted
    /// or overriding schedule, else the first servable candidate.
    #[serde(default)]
    basis: Option<String>,
    #[serde(default)]
    policies: Option<Vec<PolicySpec>>,
    #[serde(default)]
    goal: Option<Goal>,
    #[serde(default)]
    seed: Option<u64>,
}

pub async fn replan(State(state): State<AppState>, Path(raw): Path<String>, body: Bytes) -> ApiResult<Response> {
    let req: ReplanRequest = parse(&body)?;
    if !req.clock.is_finite() || req.clock < 0.0 {
        return Err(ApiError::bad_request(format!("clock must be a finite time >= 0, got {}", req.clock)));
    }
    let base = plan_snapshot(&state, &raw)?;
    if !matches!(base.status, PlanStatus::Draft | PlanStatus::Accepted | PlanStatus::Overridden) {
        return Err(ApiError::conflict(format!("plan {} is {:?}; only finished plans can be replanned", base.plan_id, base.status)));
    }
    let instance = state.store.read(|d| load_order_set(d, &base.order_set_id))?;
    let (basis, own_actions) = match (&base.decision, &req.basis) {
        (Some(Decision::Override { schedule }), None) => {
            ("OVERRIDE".to_string(), actions_from_schedule(instance.clone(), &schedule.schedule(), Features::default())?)
        }
        (decision, requested) => {
            let wanted = requested.clone().or_else(|| match decision {
                Some(Decision::Accept { policy }) => Some(policy.clone()),
                _ => None,
            });
            let c = base
                .candidates
                .iter()
                .find(|c| c.is_servable() && wanted.as_ref().is_none_or(|w| &c.policy == w))
                .ok_or_else(|| ApiError::unprocessable("no_basis", "the base plan has no servable schedule to replay"))?;
            (c.policy.clone(), c.actions.clone())
        }
    };
    let goal = req.goal.unwrap_or(base.goal);
    let mut history = base.prefix_actions.clone();
    history.extend(own_actions);
    let mut env = Env::new(instance.clone(), goal.reward(), Features::default())?;
    let applied = replay_to_clock(&mut env, &history, req.clock)?;
    let mut warnings = Vec::new();
    if env.is_done() {
        warnings.push(format!(
            "clock {} is at or past the end of the base schedule (makespan {}); nothing left to plan",
            req.clock,
            env.kpis().makespan
        ));
    }
    enqueue_plan(
        &state,
        NewPlan {
            order_set_id: base.order_set_id.clone(),
            instance,
            goal,
            specs: req.policies.unwrap_or(base.policies.clone()),
            seed: req.seed.unwrap_or(base.seed),
            origin: Some(ReplanOrigin { plan_id: base.plan_id, clock: req.clock, basis }),
            prefix: history[..applied].to_vec(),
            finished: env.is_done(),
            warnings,
        },
    )
}

#[derive(Debug, Deserialize)]
pub struct GanttQuery {
    #[serde(default)]
    policy: Option<String>,
}

pub async fn gantt(State(state): State<AppState>, Path(raw): Path<String>, Query(q): Query<GanttQuery>) -> ApiResult<Response> {
    let plan = plan_snapshot(&state, &raw)?;
    let instance = state.store.read(|d| load_order_set(d, &plan.order_set_id))?;
    let override_doc = match &plan.decision {
        Some(Decision::Override { schedule }) => Some(schedule),
        _ => None,
    };
    let wanted = q.policy.or_else(|| match &plan.decision {
        Some(Decision::Accept { policy }) => Some(policy.clone()),
        Some(Decision::Override { .. }) => Some("OVERRIDE".into()),
        None => None,
    });
    let doc = match wanted.as_deref() {
        Some("OVERRIDE") => override_doc,
        Some(label) => plan.candidates.iter().find(|c| c.policy == label).and_then(|c| c.schedule.as_ref()),
        None => plan.candidates.iter().find_map(|c| c.schedule.as_ref()),
    }
    .ok_or_else(|| ApiError::not_found(format!("plan {} has no schedule for {}", plan.plan_id, wanted.as_deref().unwrap_or("any policy"))))?;
    let svg = render_gantt(&instance, &doc.schedule(), GanttFormat::Svg);
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

pub async fn list_policies(State(state): State<AppState>) -> Json<Vec<PolicyRecord>> {
    Json(state.store.read(|d| d.policies.values().map(PolicyRecord::summary).collect()))
}

pub async fn get_policy(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<PolicyRecord>> {
    state.store.read(|d| d.policies.get(&id).cloned()).map(Json).ok_or_else(|| ApiError::not_found(format!("unknown policy id '{id}'")))
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrainKind {
    TabularQ,
    Neural,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRequest {
    order_set_id: String,
    kind: TrainKind,
    #[serde(default)]
    goal: Goal,
    #[serde(default)]
    q: Option<QHyperparams>,
    #[serde(default)]
    pg: Option<PgHyperparams>,
    #[serde(default)]
    seed: Option<u64>,
}

pub async fn train_policy(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: TrainRequest = parse(&body)?;
    req.goal.validate()?;
    let instance = state.store.read(|d| load_order_set(d, &req.order_set_id))?;
    let (trainer, kind) = match req.kind {
        TrainKind::TabularQ => {
            let mut hp = req.q.unwrap_or_default();
            hp.seed = req.seed.unwrap_or(hp.seed);
            hp.validate()?;
            (Trainer::Q(hp), "TABULAR_Q")
        }
        TrainKind::Neural => {
            let mut hp = req.pg.unwrap_or_default();
            hp.seed = req.seed.unwrap_or(hp.seed);
            hp.validate()?;
            (Trainer::Pg(hp), "NEURAL")
        }
    };
    let policy_id = state
        .store
        .write(|d| {
            let id = format!("pol-{}", d.next_policy);
            d.next_policy += 1;
            d.policies.insert(
                id.clone(),
                PolicyRecord {
                    policy_id: id.clone(),
                    kind: kind.into(),
                    order_set_id: req.order_set_id.clone(),
                    goal: req.goal,
                    status: TrainingStatus::Training,
                    shape: None,
                    curve: Vec::new(),
                    error: None,
                    policy: None,
                },
            );
            id
        })
        .map_err(ApiError::from)?;
    let (store, store2) = (state.store.clone(), state.store.clone());
    let (id, id2) = (policy_id.clone(), policy_id.clone());
    let goal = req.goal;
    state.spawn_job(move || run_training(&store, &id, instance, goal, trainer), move || fail_training(&store2, &id2, "training job panicked".into()));
    Ok((StatusCode::ACCEPTED, Json(json!({ "policy_id": policy_id, "status": TrainingStatus::Training }))).into_response())
}

pub async fn audit_log(State(state): State<AppState>) -> Json<Vec<AuditRecord>> {
    Json(state.store.read(|d| d.audit.clone()))
}
