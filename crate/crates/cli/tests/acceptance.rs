//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//! Run with `cargo test --release -p batchshop-cli --test acceptance`.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use axum::Router;
use batchshop::env::{rollout, Action, Env, Features, RewardConfig};
use batchshop::eval::{validate_schedule, ScheduleDoc};
use batchshop::io::{generate_instance, paper_instance, GenSpec, InstanceDoc, Range};
use batchshop::model::total_processing_time;
use batchshop::policies::pg::{ppo_grad, ppo_loss, LossCoefficients, Mlp, Sample};
use batchshop::policies::{
    brute_force_optimal, evaluate_policy, train_pg, train_q, Agent, ExactConfig, Heuristic, Mode, Objective, PgHyperparams, PolicyKind, QHyperparams,
};
use batchshop_service::{router, AppState, ServiceConfig};
use http_body_util::BodyExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;

fn check(cond: bool, ok: String, fail: String) -> Outcome {
    if cond {
        Ok(ok)
    } else {
        Err(fail)
    }
}

fn paper_env() -> Env {
    Env::new(Arc::new(paper_instance()), RewardConfig::makespan(), Features::default()).unwrap()
}

fn processing_time_formula() -> Outcome {
    let t = total_processing_time(400, 0.0625, 0.0, 4.0).map_err(|e| e.to_string())?;
    check(t == 29.0, format!("400 x 0.0625 + 0 + 4 = {t}"), format!("got {t}, want exactly 29"))
}

fn initial_observation() -> Outcome {
    let obs = paper_env().observe();
    let ok = obs.machine_info == [vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]
        && obs.job_info == [vec![30.0, 10.0, 20.0], vec![120.0, 110.0, 100.0]]
        && obs.buffer_info == [60.0, 0.0, 0.0];
    check(ok, "machine_info 0, job_info [[30,10,20],[120,110,100]], buffer [60,0,0]".into(), format!("{obs:?}"))
}

fn epoch_29_trace() -> Outcome {
    let mut env = paper_env();
    for a in [Action::Assign { job: 2 }, Action::Noop, Action::Assign { job: 2 }] {
        env.step(a).map_err(|e| e.to_string())?;
    }
    let obs = env.observe();
    let rows_ok = obs.job_info == [vec![30.0, 10.0, 15.0], vec![91.0, 81.0, 71.0]]
        && obs.buffer_info == [40.0, 15.0, 0.0]
        && obs.machine_info[2] == [3.0, 3.0, 0.0];
    if !rows_ok {
        return Err(format!("t=29 observation {obs:?}"));
    }
    env.step(Action::Assign { job: 0 }).map_err(|e| e.to_string())?;
    env.step(Action::Noop).map_err(|e| e.to_string())?;
    let done_at_53 = env.clock() == 53.0 && env.state().jobs[0].next_op == 1;
    check(done_at_53, "t=29 rows match; J1 finishes at t=53".into(), format!("next epoch at t={}", env.clock()))
}

fn random_rollouts_validate() -> Outcome {
    let start = Instant::now();
    for seed in 0..1000u64 {
        let spec = GenSpec { seed, jobs: Range::new(1, 6), machines: Range::new(1, 6), ..GenSpec::default() };
        let inst = Arc::new(generate_instance(&spec).map_err(|e| e.to_string())?);
        let env = Env::new(inst.clone(), RewardConfig::default(), Features::default()).map_err(|e| e.to_string())?;
        let run = rollout(env, &mut Agent::greedy(PolicyKind::Random), seed).map_err(|e| format!("seed {seed}: {e}"))?;
        let v = validate_schedule(&inst, &run.schedule).map_err(|e| e.to_string())?;
        if !v.is_empty() {
            return Err(format!("seed {seed}: {}", v[0]));
        }
        for (k, peak) in run.kpis.peak_buffer.iter().enumerate() {
            if *peak > inst.capacity(k) + 1e-9 {
                return Err(format!("seed {seed}: buffer {k} peaked at {peak}"));
            }
        }
    }
    Ok(format!("1000 rollouts, 0 violations, {:.1}s", start.elapsed().as_secs_f64()))
}

fn exact_lower_bound() -> Outcome {
    let start = Instant::now();
    let mut ties = 0;
    for seed in 0..20u64 {
        let spec = GenSpec { seed, jobs: Range::new(2, 3), machines: Range::new(2, 3), ..GenSpec::default() };
        let inst = Arc::new(generate_instance(&spec).map_err(|e| e.to_string())?);
        let opt = brute_force_optimal(inst.clone(), Objective::Makespan, ExactConfig::default()).map_err(|e| format!("seed {seed}: {e}"))?.value;
        let mut tied = false;
        for h in Heuristic::ALL {
            let env = Env::new(inst.clone(), RewardConfig::makespan(), Features::default()).unwrap();
            let run = rollout(env, &mut Agent::greedy(PolicyKind::heuristic(h)), seed).map_err(|e| e.to_string())?;
            // A deadlocked run never completes, so it cannot beat the optimum.
            if run.deadlocked {
                continue;
            }
            if run.kpis.makespan < opt - 1e-9 {
                return Err(format!("seed {seed}: {h:?} makespan {} below optimum {opt}", run.kpis.makespan));
            }
            tied |= (run.kpis.makespan - opt).abs() <= 1e-9;
        }
        ties += tied as usize;
    }
    check(
        ties >= 1,
        format!("20 instances, a heuristic matches the optimum on {ties}, {:.1}s", start.elapsed().as_secs_f64()),
        "no heuristic ever matched the optimum".into(),
    )
}

fn q_learning_optimality() -> Outcome {
    let mut hits = 0;
    for seed in 0..20u64 {
        let inst = Arc::new(generate_instance(&GenSpec::sized(seed, 2, 2)).map_err(|e| e.to_string())?);
        let opt = brute_force_optimal(inst.clone(), Objective::Makespan, ExactConfig::default()).map_err(|e| e.to_string())?.value;
        let q = train_q(inst.clone(), RewardConfig::makespan(), Features::default(), &QHyperparams::default()).map_err(|e| e.to_string())?;
        let policy = PolicyKind::TabularQ { table: q.table };
        let e = evaluate_policy(inst, &policy, RewardConfig::makespan(), Features::default(), Mode::Greedy, 1, 0).map_err(|e| e.to_string())?;
        hits += ((e.makespans[0] - opt).abs() <= 1e-6) as usize;
    }
    check(hits >= 18, format!("{hits}/20 2x2 instances optimal after 5000 episodes"), format!("only {hits}/20 optimal"))
}

fn gradcheck() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let actor = Mlp::new(vec![1, 2, 2], &mut rng, 1.0);
    let critic = Mlp::new(vec![1, 2, 1], &mut rng, 1.0);
    let batch = vec![
        Sample { x: vec![0.3], mask: vec![true, true], action: 0, logp_old: -0.9, advantage: 1.3, target: 0.4 },
        Sample { x: vec![-0.7], mask: vec![true, true], action: 1, logp_old: -0.5, advantage: -0.6, target: -1.1 },
        Sample { x: vec![0.9], mask: vec![false, true], action: 1, logp_old: 0.0, advantage: 0.8, target: 0.2 },
    ];
    let c = LossCoefficients { clip: 0.2, entropy: 0.05, value: 0.5 };
    let (_, ga, gc) = ppo_grad(&actor, &critic, &batch, &c);
    let n_actor = actor.params.len();
    let mut worst: f64 = 0.0;
    for i in 0..n_actor + critic.params.len() {
        let eval = |delta: f64| {
            let (mut a, mut cr) = (actor.clone(), critic.clone());
            if i < n_actor {
                a.params[i] += delta;
            } else {
                cr.params[i - n_actor] += delta;
            }
            ppo_loss(&a, &cr, &batch, &c)
        };
        let numeric = (eval(1e-6) - eval(-1e-6)) / 2e-6;
        let analytic = if i < n_actor { ga[i] } else { gc[i - n_actor] };
        worst = worst.max((numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8));
    }
    worst
}

fn policy_gradient_sanity() -> Outcome {
    let start = Instant::now();
    let worst = gradcheck();
    if worst >= 1e-4 {
        return Err(format!("gradient relative error {worst:.2e}"));
    }
    let inst = Arc::new(paper_instance());
    let reward = RewardConfig::makespan();
    let opt = brute_force_optimal(inst.clone(), Objective::Makespan, ExactConfig::default()).map_err(|e| e.to_string())?.value;
    let random = evaluate_policy(inst.clone(), &PolicyKind::Random, reward, Features::default(), Mode::Sample, 100, 0).map_err(|e| e.to_string())?;
    let mut best = f64::INFINITY;
    for seed in 0..5 {
        let hp = PgHyperparams { seed, ..PgHyperparams::default() };
        let t = train_pg(inst.clone(), reward, Features::default(), &hp).map_err(|e| e.to_string())?;
        let e = evaluate_policy(inst.clone(), &PolicyKind::Neural { params: t.policy }, reward, Features::default(), Mode::Sample, 100, 1000)
            .map_err(|e| e.to_string())?;
        best = best.min(e.mean_makespan());
    }
    check(
        best < random.mean_makespan() && best <= 1.1 * opt,
        format!(
            "gradient error {worst:.1e}; best-of-5 mean makespan {best:.2} vs random {:.2}, optimum {opt}, {:.1}s",
            random.mean_makespan(),
            start.elapsed().as_secs_f64()
        ),
        format!("best-of-5 mean {best:.2}, random {:.2}, optimum {opt}", random.mean_makespan()),
    )
}

fn cli(args: &[&str]) -> (i32, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = batchshop_cli::run(std::iter::once("batchshop").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned() + &String::from_utf8_lossy(&err))
}

fn determinism() -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let out = d.path().to_str().unwrap();
        let (code, text) = cli(&["plan", "--instance", "paper3x3", "--policy", "fcfs,edd,spt,lpt,random,exact", "--seed", "42", "--out", out]);
        if code != 0 {
            return Err(text);
        }
        let policy = d.path().join("q.json");
        let (code, text) = cli(&["train", "--instance", "paper3x3", "--algo", "q", "--episodes", "300", "--seed", "3", "--out", policy.to_str().unwrap()]);
        if code != 0 {
            return Err(text);
        }
        let (code, text) = cli(&["plan", "--instance", "paper3x3", "--policy-file", policy.to_str().unwrap(), "--seed", "42", "--out", out]);
        if code != 0 {
            return Err(text);
        }
    }
    let names: Vec<String> = std::fs::read_dir(dirs[0].path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    for name in &names {
        if std::fs::read(dirs[0].path().join(name)).ok() != std::fs::read(dirs[1].path().join(name)).ok() {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} trajectory logs, schedules, SVGs and policy files byte-identical across two runs", names.len()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Result<Value, String> {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    let value: Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    if !status.is_success() {
        return Err(format!("{method} {uri}: {status} {value}"));
    }
    Ok(value)
}

async fn finished(app: &Router, id: &Value) -> Result<Value, String> {
    for _ in 0..1500 {
        let plan = call(app, "GET", &format!("/plans/{id}"), None).await?;
        if !matches!(plan["status"].as_str(), Some("PENDING") | Some("RUNNING")) {
            return Ok(plan);
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    Err(format!("plan {id} did not finish"))
}

async fn service_flow(cli_schedule: ScheduleDoc) -> Outcome {
    let app = router(AppState::new(ServiceConfig { workers: 2, ..ServiceConfig::default() }).map_err(|e| e.to_string())?);
    let inst = paper_instance();
    let os = call(&app, "POST", "/orders", Some(json!({ "instance": InstanceDoc::from_instance(&inst) }))).await?;
    let created = call(&app, "POST", "/plans", Some(json!({ "order_set_id": os["order_set_id"], "policies": ["EDD"], "seed": 42 }))).await?;
    let plan = finished(&app, &created["plan_id"]).await?;
    let served: ScheduleDoc = serde_json::from_value(plan["candidates"][0]["schedule"].clone()).map_err(|e| e.to_string())?;
    let violations = validate_schedule(&inst, &served.schedule()).map_err(|e| e.to_string())?;
    if !violations.is_empty() {
        return Err(format!("served schedule fails validation: {}", violations[0]));
    }
    if served != cli_schedule {
        return Err("service and CLI schedules differ".into());
    }
    let re = call(&app, "POST", &format!("/plans/{}/replan", created["plan_id"]), Some(json!({ "clock": 29.0 }))).await?;
    let replanned = finished(&app, &re["plan_id"]).await?;
    let mut env = paper_env();
    env.step(Action::Assign { job: 2 }).unwrap();
    env.step(Action::Noop).unwrap();
    let want = serde_json::to_value(env.state()).unwrap();
    check(
        replanned["start_state"] == want,
        format!("EDD makespan {} matches CLI; replan at 29 starts from the t=29 state", served.kpis.makespan),
        "replanned start state differs from the t=29 environment state".into(),
    )
}

fn service_end_to_end() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = cli(&["plan", "--instance", "paper3x3", "--policy", "edd", "--seed", "42", "--out", dir.path().to_str().unwrap()]);
    if code != 0 {
        return Err(text);
    }
    let doc = ScheduleDoc::from_json(&std::fs::read_to_string(Path::new(dir.path()).join("edd.schedule.json")).unwrap()).map_err(|e| e.to_string())?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    runtime.block_on(service_flow(doc))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("operation time formula", processing_time_formula),
        ("initial observation", initial_observation),
        ("t=29 trace", epoch_29_trace),
        ("random rollouts validate", random_rollouts_validate),
        ("exact search lower bound", exact_lower_bound),
        ("q-learning optimality", q_learning_optimality),
        ("policy gradient sanity", policy_gradient_sanity),
        ("determinism", determinism),
        ("service end to end", service_end_to_end),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
