use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use batchshop::env::{Action, Env, Features, RewardConfig};
use batchshop::eval::{validate_schedule, ScheduleDoc};
use batchshop::io::{generate_instance, paper_instance, GenSpec, InstanceDoc};
use batchshop_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use std::sync::Arc;
use tower::ServiceExt;

fn app_with(config: ServiceConfig) -> Router {
    router(AppState::new(config).unwrap())
}

fn app() -> Router {
    app_with(ServiceConfig { workers: 2, ..ServiceConfig::default() })
}

async fn raw(app: &Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, String, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(Body::from).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp.headers().get("content-type").map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, ctype, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, _, text) = raw(app, method, uri, body.map(|b| b.to_string())).await;
    (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

fn paper_doc() -> Value {
    serde_json::to_value(InstanceDoc::from_instance(&paper_instance())).unwrap()
}

async fn submit_paper(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/orders", Some(json!({ "instance": paper_doc() }))).await;
    assert!(status.is_success(), "{body}");
    body["order_set_id"].as_str().unwrap().to_string()
}

async fn wait_plan(app: &Router, id: u64) -> Value {
    for _ in 0..3000 {
        let (status, body) = call(app, "GET", &format!("/plans/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if !matches!(body["status"].as_str(), Some("PENDING") | Some("RUNNING")) {
            return body;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("plan {id} never finished");
}

async fn wait_policy(app: &Router, id: &str) -> Value {
    for _ in 0..6000 {
        let (_, body) = call(app, "GET", &format!("/policies/{id}"), None).await;
        if body["status"] != "TRAINING" {
            return body;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("policy {id} never finished training");
}

async fn plan(app: &Router, request: Value) -> Value {
    let (status, body) = call(app, "POST", "/plans", Some(request)).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    wait_plan(app, body["plan_id"].as_u64().unwrap()).await
}

fn candidate<'a>(plan: &'a Value, policy: &str) -> &'a Value {
    plan["candidates"].as_array().unwrap().iter().find(|c| c["policy"] == policy).unwrap()
}

/// Candidates minus their plan-specific Gantt link.
fn schedules(plan: &Value) -> Vec<Value> {
    let mut cs = plan["candidates"].as_array().unwrap().clone();
    for c in &mut cs {
        c.as_object_mut().unwrap().remove("gantt");
    }
    cs
}

fn makespan(plan: &Value, policy: &str) -> f64 {
    candidate(plan, policy)["schedule"]["kpis"]["makespan"].as_f64().unwrap()
}

#[tokio::test]
async fn health_reports_api_version() {
    let (status, body) = call(&app(), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["api_version"], 1);
}

#[tokio::test]
async fn order_sets_are_idempotent_per_token() {
    let app = app();
    let req = json!({ "client_token": "t-1", "instance": paper_doc() });
    let (s1, b1) = call(&app, "POST", "/orders", Some(req.clone())).await;
    let (s2, b2) = call(&app, "POST", "/orders", Some(req)).await;
    assert_eq!(s1, StatusCode::CREATED);
    assert_eq!(s2, StatusCode::OK);
    assert_eq!(b1["order_set_id"], b2["order_set_id"]);
    assert_eq!(b1["n_jobs"], 3);

    let id = b1["order_set_id"].as_str().unwrap();
    let (s, stored) = call(&app, "GET", &format!("/orders/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(stored["instance"], paper_doc());

    let other = InstanceDoc::from_instance(&generate_instance(&GenSpec::sized(1, 2, 2)).unwrap());
    let (s, body) = call(&app, "POST", "/orders", Some(json!({ "client_token": "t-1", "instance": other }))).await;
    assert_eq!(s, StatusCode::CONFLICT, "{body}");
}

#[tokio::test]
async fn bad_order_payloads_are_rejected() {
    let app = app();
    let shop = batchshop::io::ShopDoc::from_instance(&paper_instance());
    let (s, body) = call(&app, "POST", "/orders", Some(json!({ "shop": shop, "articles": [], "orders": [] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("empty order list"));

    let mut doc = paper_doc();
    doc["jobs"] = json!([]);
    let (s, _) = call(&app, "POST", "/orders", Some(json!({ "instance": doc }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let mut doc = paper_doc();
    doc["transport"] = json!([[0.0]]);
    let (s, body) = call(&app, "POST", "/orders", Some(json!({ "instance": doc }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_input");

    let (s, _, _) = raw(&app, "POST", "/orders", Some("{not json".into())).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn orders_from_catalog_expand_to_jobs() {
    let app = app();
    let inst = paper_instance();
    let doc = InstanceDoc::from_instance(&inst);
    let articles: Vec<Value> = doc
        .jobs
        .iter()
        .map(|j| json!({ "article_id": j.name, "components": [{ "name": j.name, "quantity_per_article": 1, "operations": j.operations }] }))
        .collect();
    let orders: Vec<Value> = doc.jobs.iter().map(|j| json!({ "article_id": j.name, "quantity": j.quantity, "deadline": j.deadline })).collect();
    let shop = batchshop::io::ShopDoc::from_instance(&inst);
    let (s, body) = call(&app, "POST", "/orders", Some(json!({ "shop": shop, "articles": articles, "orders": orders }))).await;
    assert_eq!(s, StatusCode::CREATED, "{body}");
    assert_eq!(body["n_jobs"], 3);
    assert_eq!(body["total_ops"], 9);
}

#[tokio::test]
async fn heuristic_plans_serve_validated_schedules() {
    let app = app();
    let os = submit_paper(&app).await;
    let p = plan(&app, json!({ "order_set_id": os, "policies": ["EDD", "FCFS", "EXACT"], "seed": 7 })).await;
    assert_eq!(p["status"], "DRAFT");
    assert_eq!(p["progress"], json!({ "done": 3, "total": 3 }));
    let inst = paper_instance();
    for c in p["candidates"].as_array().unwrap() {
        assert_eq!(c["status"], "READY", "{c}");
        let doc: ScheduleDoc = serde_json::from_value(c["schedule"].clone()).unwrap();
        assert!(validate_schedule(&inst, &doc.schedule()).unwrap().is_empty());
        assert!(c["gantt"].as_str().unwrap().starts_with("/plans/"));
    }
    assert_eq!(makespan(&p, "EDD"), 177.0);
    assert_eq!(makespan(&p, "FCFS"), 163.0);
    assert_eq!(makespan(&p, "EXACT"), 163.0);
}

#[tokio::test]
async fn tardiness_and_balanced_goals() {
    let app = app();
    let os = submit_paper(&app).await;
    let p = plan(&app, json!({ "order_set_id": os, "goal": "TARDINESS", "policies": ["EXACT"] })).await;
    assert_eq!(candidate(&p, "EXACT")["objective"], 97.0);
    let p = plan(&app, json!({ "order_set_id": os, "goal": { "BALANCED": { "makespan": 1.0, "tardiness": 0.0 } }, "policies": ["EXACT"] })).await;
    assert_eq!(candidate(&p, "EXACT")["objective"], 163.0);
    let (s, _) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "goal": { "BALANCED": { "makespan": -1.0, "tardiness": 0.0 } }, "policies": ["EDD"] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn inline_instance_plans_work() {
    let app = app();
    let p = plan(&app, json!({ "instance": paper_doc(), "policies": ["SPT"] })).await;
    assert_eq!(makespan(&p, "SPT"), 208.0);
    assert!(p["order_set_id"].as_str().unwrap().starts_with("os-"));
}

#[tokio::test]
async fn plan_request_errors() {
    let app = app_with(ServiceConfig { workers: 1, exact_max_ops: 4, ..ServiceConfig::default() });
    let os = submit_paper(&app).await;
    let (s, _) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "policies": [] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, body) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "policies": ["EXACT"] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(body["message"].as_str().unwrap().contains("at most 4 operations"), "{body}");
    let (s, _) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "policies": [{ "TRAINED": "pol-99" }] }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": "os-missing", "policies": ["EDD"] }))).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "policies": ["MAGIC"] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/plans/12345", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/plans/abc", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn trained_policies_plan_and_check_shape() {
    let app = app();
    let os = submit_paper(&app).await;
    let (s, body) = call(&app, "POST", "/policies/train", Some(json!({ "order_set_id": os, "kind": "TABULAR_Q", "seed": 0 }))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{body}");
    let pid = body["policy_id"].as_str().unwrap().to_string();
    let rec = wait_policy(&app, &pid).await;
    assert_eq!(rec["status"], "READY", "{rec}");

    let p = plan(&app, json!({ "order_set_id": os, "policies": ["EDD", { "TRAINED": pid }] })).await;
    assert_eq!(p["candidates"].as_array().unwrap().len(), 2);
    let trained = makespan(&p, &format!("TRAINED:{pid}"));
    assert!(trained <= 163.0 * 1.05, "trained makespan {trained}");

    let (_, list) = call(&app, "GET", "/policies", None).await;
    assert_eq!(list.as_array().unwrap().len(), 1);
    assert!(list[0].get("policy").is_none());

    let small = InstanceDoc::from_instance(&generate_instance(&GenSpec::sized(2, 2, 2)).unwrap());
    let (_, other) = call(&app, "POST", "/orders", Some(json!({ "instance": small }))).await;
    let (s, body) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": other["order_set_id"], "policies": [{ "TRAINED": pid }] }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["message"].as_str().unwrap().contains("policy/instance incompatible"), "{body}");
}

#[tokio::test]
async fn training_rejects_bad_hyperparameters() {
    let app = app();
    let os = submit_paper(&app).await;
    let (s, _) = call(&app, "POST", "/policies/train", Some(json!({ "order_set_id": os, "kind": "TABULAR_Q", "q": { "alpha": 0.0 } }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", "/policies/train", Some(json!({ "order_set_id": os, "kind": "NEURAL", "pg": { "updates": 0 } }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/policies/pol-1", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn busy_workers_leave_plans_pending_with_progress() {
    let app = app_with(ServiceConfig { workers: 1, ..ServiceConfig::default() });
    let os = submit_paper(&app).await;
    let (s, _) = call(&app, "POST", "/policies/train", Some(json!({ "order_set_id": os, "kind": "TABULAR_Q", "q": { "episodes": 40000 } }))).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    let (_, body) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "policies": ["EDD", "LPT"] }))).await;
    let id = body["plan_id"].as_u64().unwrap();
    let (_, snap) = call(&app, "GET", &format!("/plans/{id}"), None).await;
    assert_eq!(snap["status"], "PENDING");
    assert_eq!(snap["progress"], json!({ "done": 0, "total": 2 }));
    let done = wait_plan(&app, id).await;
    assert_eq!(done["status"], "DRAFT");
}

#[tokio::test]
async fn accept_then_conflict_and_audit() {
    let app = app();
    let os = submit_paper(&app).await;
    let p = plan(&app, json!({ "order_set_id": os, "policies": ["EDD"] })).await;
    let id = p["plan_id"].as_u64().unwrap();
    let uri = format!("/plans/{id}/decision");
    let (s, _) = call(&app, "POST", &uri, Some(json!({ "decision": "ACCEPT", "policy": "LPT" }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let (s, body) = call(&app, "POST", &uri, Some(json!({ "decision": "ACCEPT", "policy": "EDD" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["status"], "ACCEPTED");
    let (s, _) = call(&app, "POST", &uri, Some(json!({ "decision": "ACCEPT", "policy": "EDD" }))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, audit) = call(&app, "GET", "/audit", None).await;
    assert_eq!(audit.as_array().unwrap().len(), 1);
    assert_eq!(audit[0]["decision"], "ACCEPT");
    assert_eq!(audit[0]["makespan"], 177.0);
    // The served candidate is untouched by the decision.
    let (_, after) = call(&app, "GET", &format!("/plans/{id}"), None).await;
    assert_eq!(after["candidates"], p["candidates"]);
}

#[tokio::test]
async fn override_is_revalidated() {
    let app = app();
    let os = submit_paper(&app).await;
    let p = plan(&app, json!({ "order_set_id": os, "policies": ["EDD", "FCFS"] })).await;
    let id = p["plan_id"].as_u64().unwrap();
    let uri = format!("/plans/{id}/decision");

    let mut bad = candidate(&p, "EDD")["schedule"].clone();
    let ivs = bad["intervals"].as_array_mut().unwrap();
    let first_process = ivs.iter().position(|iv| iv["kind"] == "PROCESS").unwrap();
    let mut dup = ivs[first_process].clone();
    dup["job"] = json!(0);
    ivs.push(dup);
    let (s, body) = call(&app, "POST", &uri, Some(json!({ "decision": "OVERRIDE", "schedule": bad }))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let codes: Vec<&str> = body["violations"].as_array().unwrap().iter().map(|v| v["code"].as_str().unwrap()).collect();
    assert!(codes.contains(&"OVERLAP"), "{codes:?}");
    let (_, still) = call(&app, "GET", &format!("/plans/{id}"), None).await;
    assert_eq!(still["status"], "DRAFT");

    let good = candidate(&p, "FCFS")["schedule"].clone();
    let (s, body) = call(&app, "POST", &uri, Some(json!({ "decision": "OVERRIDE", "schedule": good }))).await;
    assert_eq!(s, StatusCode::OK, "{body}");
    assert_eq!(body["status"], "OVERRIDDEN");
    assert_eq!(body["decision"]["schedule"]["kpis"]["makespan"], 163.0);

    let (_, audit) = call(&app, "GET", "/audit", None).await;
    let accepted: Vec<bool> = audit.as_array().unwrap().iter().map(|a| a["accepted"].as_bool().unwrap()).collect();
    assert_eq!(accepted, [false, true]);

    // Replanning an overridden plan replays the override.
    let (s, body) = call(&app, "POST", &format!("/plans/{id}/replan"), Some(json!({ "clock": 0.0 }))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{body}");
    let re = wait_plan(&app, body["plan_id"].as_u64().unwrap()).await;
    assert_eq!(re["origin"]["basis"], "OVERRIDE");
}

fn t29_state() -> Value {
    let mut env = Env::new(Arc::new(paper_instance()), RewardConfig::makespan(), Features::default()).unwrap();
    env.step(Action::Assign { job: 2 }).unwrap();
    env.step(Action::Noop).unwrap();
    assert_eq!(env.clock(), 29.0);
    serde_json::to_value(env.state()).unwrap()
}

#[tokio::test]
async fn replan_resumes_from_the_clock() {
    let app = app();
    let os = submit_paper(&app).await;
    let base = plan(&app, json!({ "order_set_id": os, "policies": ["EDD", "FCFS"], "seed": 3 })).await;
    let id = base["plan_id"].as_u64().unwrap();
    let uri = format!("/plans/{id}/replan");

    let (s, body) = call(&app, "POST", &uri, Some(json!({ "clock": 29.0, "basis": "EDD" }))).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{body}");
    let at29 = wait_plan(&app, body["plan_id"].as_u64().unwrap()).await;
    assert_eq!(at29["status"], "DRAFT");
    assert_eq!(at29["start_state"], t29_state());
    assert_eq!(at29["origin"], json!({ "plan_id": id, "clock": 29.0, "basis": "EDD" }));
    assert_eq!(makespan(&at29, "EDD"), 177.0);
    let inst = paper_instance();
    for c in at29["candidates"].as_array().unwrap() {
        let doc: ScheduleDoc = serde_json::from_value(c["schedule"].clone()).unwrap();
        assert!(validate_schedule(&inst, &doc.schedule()).unwrap().is_empty());
    }

    let (_, body) = call(&app, "POST", &uri, Some(json!({ "clock": 0.0 }))).await;
    let at0 = wait_plan(&app, body["plan_id"].as_u64().unwrap()).await;
    assert_eq!(schedules(&at0), schedules(&base));

    let (_, body) = call(&app, "POST", &uri, Some(json!({ "clock": 1000.0 }))).await;
    let past = wait_plan(&app, body["plan_id"].as_u64().unwrap()).await;
    assert_eq!(past["status"], "DRAFT");
    assert!(past["candidates"].as_array().unwrap().is_empty());
    assert!(past["warnings"][0].as_str().unwrap().contains("nothing left to plan"));

    let (s, _) = call(&app, "POST", &uri, Some(json!({ "clock": -1.0 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "POST", &uri, Some(json!({ "at": 3 }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (_, original) = call(&app, "GET", &format!("/plans/{id}"), None).await;
    assert_eq!(original, base);
}

#[tokio::test]
async fn gantt_is_served_as_svg() {
    let app = app();
    let os = submit_paper(&app).await;
    let p = plan(&app, json!({ "order_set_id": os, "policies": ["EDD", "FCFS"] })).await;
    let id = p["plan_id"].as_u64().unwrap();
    let (s, ctype, svg) = raw(&app, "GET", &format!("/plans/{id}/gantt.svg?policy=FCFS"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype, "image/svg+xml");
    assert!(svg.starts_with("<svg"));
    let (_, _, again) = raw(&app, "GET", &format!("/plans/{id}/gantt.svg?policy=FCFS"), None).await;
    assert_eq!(svg, again);
    let (s, _, _) = raw(&app, "GET", &format!("/plans/{id}/gantt.svg?policy=LPT"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn identical_requests_give_identical_schedules() {
    let app = app();
    let os = submit_paper(&app).await;
    let req = json!({ "order_set_id": os, "policies": ["RANDOM", "EDD"], "seed": 11 });
    let a = plan(&app, req.clone()).await;
    let b = plan(&app, req).await;
    assert_eq!(schedules(&a), schedules(&b));
}

#[tokio::test]
async fn store_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig { data_dir: Some(dir.path().to_path_buf()), workers: 1, ..ServiceConfig::default() };
    let app = app_with(config.clone());
    let os = submit_paper(&app).await;
    let p = plan(&app, json!({ "order_set_id": os, "policies": ["EDD"] })).await;
    drop(app);

    let app = app_with(config);
    let (s, _) = call(&app, "GET", &format!("/orders/{os}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (_, again) = call(&app, "GET", &format!("/plans/{}", p["plan_id"]), None).await;
    assert_eq!(again, p);
    let (_, next) = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os, "policies": ["EDD"] }))).await;
    assert_eq!(next["plan_id"].as_u64().unwrap(), p["plan_id"].as_u64().unwrap() + 1);
}
