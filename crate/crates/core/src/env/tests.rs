use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::eval::{compute_kpis, validate_schedule};
use crate::io::{generate_instance, paper_instance, GenSpec};
use crate::policies::{Agent, Heuristic, PolicyKind};

fn paper_env(config: RewardConfig) -> Env {
    Env::new(Arc::new(paper_instance()), config, Features::default()).unwrap()
}

fn assign(job: usize) -> Action {
    Action::Assign { job }
}

#[test]
fn initial_observation() {
    let env = paper_env(RewardConfig::default());
    let obs = env.observe();
    assert_eq!(obs.machine_info, [vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
    assert_eq!(obs.job_info, [vec![30.0, 10.0, 20.0], vec![120.0, 110.0, 100.0]]);
    assert_eq!(obs.buffer_info, vec![60.0, 0.0, 0.0]);
    assert_eq!(obs.flat_len(), 9 + 6 + 3);
    assert_eq!(env.eligible_actions(), vec![true, true, true, false]);
}

#[test]
fn first_decisions() {
    let mut env = paper_env(RewardConfig::makespan());
    let r = env.step(assign(2)).unwrap();
    assert_eq!(r.reward, 0.0);
    assert_eq!(env.clock(), 0.0);
    // every job starts on M1, which is now busy
    assert_eq!(r.info.mask, vec![false, false, false, true]);
    assert_eq!(r.observation.machine_info[0], vec![3.0, 0.0, 0.0]);
    assert_eq!(r.observation.machine_info[1], vec![29.0, 0.0, 0.0]);
    assert_eq!(r.observation.machine_info[2], vec![3.0, 0.0, 0.0]);

    let r = env.step(Action::Noop).unwrap();
    assert_eq!(env.clock(), 29.0);
    assert_eq!(r.reward, -29.0);
    assert_eq!(r.observation.machine_info, [vec![0.0; 3], vec![0.0; 3], vec![3.0, 0.0, 0.0]]);
    assert_eq!(r.observation.job_info[0], vec![30.0, 10.0, 15.0]);
    assert_eq!(r.observation.job_info[1], vec![91.0, 81.0, 71.0]);
    // J3 still holds its place in B1 until it is dispatched onward
    assert_eq!(r.observation.buffer_info, vec![60.0, 0.0, 0.0]);
    assert_eq!(r.info.mask, vec![true, true, true, false]);
    assert_eq!(env.state().jobs[2].location, JobLocation::InBuffer { machine: 0 });
}

#[test]
fn epoch_29_after_dispatching_j3() {
    let mut env = paper_env(RewardConfig::makespan());
    for a in [assign(2), Action::Noop, assign(2)] {
        env.step(a).unwrap();
    }
    let obs = env.observe();
    assert_eq!(obs.job_info, [vec![30.0, 10.0, 15.0], vec![91.0, 81.0, 71.0]]);
    assert_eq!(obs.buffer_info, vec![40.0, 15.0, 0.0]);
    assert_eq!(obs.machine_info[2], vec![3.0, 3.0, 0.0]);
    // 10 transport + 8 setup + 16 processing
    assert_eq!(obs.machine_info[1], vec![0.0, 34.0, 0.0]);
    assert_eq!(env.eligible_actions(), vec![true, true, false, true]);

    let r = env.step(assign(0)).unwrap();
    assert_eq!(r.observation.machine_info[1][0], 24.0);
    assert_eq!(r.observation.machine_info[2][0], 1.0);
    env.step(Action::Noop).unwrap();
    assert_eq!(env.clock(), 53.0);
    let st = env.state();
    assert_eq!(st.jobs[0].next_op, 1);
    assert_eq!(st.machines[0].blocked_by, None);
    assert_eq!(st.jobs[0].location, JobLocation::InBuffer { machine: 0 });
    assert_eq!(st.events.len(), 1);
    assert_eq!(st.events[0].time, 63.0);
}

#[test]
fn masked_action_leaves_state_untouched() {
    let mut env = paper_env(RewardConfig::default());
    env.step(assign(2)).unwrap();
    let before = env.state().clone();
    for a in [assign(0), assign(2), assign(7), Action::Presetup { machine: 0, setup: SetupId(1) }] {
        let err = env.step(a).unwrap_err();
        assert!(matches!(err, Error::MaskedAction { .. }), "{a}: {err}");
    }
    assert_eq!(env.state(), &before);
    assert!(matches!(env.step_index(99), Err(Error::MaskedAction { .. })));
}

#[test]
fn noop_without_events_is_masked() {
    let mut env = paper_env(RewardConfig::default());
    assert!(matches!(env.step(Action::Noop), Err(Error::MaskedAction { .. })));
}

#[test]
fn single_job_single_machine() {
    let inst = Instance {
        machines: vec![model::Machine { id: 0, name: "M1".into(), setups: vec!["neutral".into()], setup_time: vec![vec![0.0]] }],
        jobs: vec![model::Job {
            id: 0,
            name: "J1".into(),
            batch_size: 1,
            deadline: 10.0,
            ops: vec![model::Operation { machine: 0, setup: SetupId(0), unit_time: 5.0, volume: 1.0 }],
        }],
        buffers: vec![model::BufferSpec { machine: 0, capacity: 1.0 }],
        transport: vec![vec![0.0]],
    };
    let mut env = Env::new(Arc::new(inst), RewardConfig::pure_time(), Features::default()).unwrap();
    env.step(assign(0)).unwrap();
    let r = env.step(Action::Noop).unwrap();
    assert!(r.done);
    assert_eq!(r.reward, -5.0);
    assert_eq!(env.kpis().makespan, 5.0);
    assert_eq!(env.observe().buffer_info, vec![0.0]);
    assert!(env.eligible_actions().iter().all(|&m| !m));
}

#[test]
fn zero_jobs_is_done_immediately() {
    let mut inst = paper_instance();
    inst.jobs.clear();
    let env = Env::new(Arc::new(inst), RewardConfig::default(), Features::default()).unwrap();
    assert!(env.is_done());
    assert!(!env.state().deadlocked);
    let obs = env.observe();
    assert!(obs.job_info[0].is_empty() && obs.job_info[1].is_empty());
    assert_eq!(obs.buffer_info, vec![0.0; 3]);
}

#[test]
fn action_space_round_trip() {
    let inst = paper_instance();
    let space = ActionSpace::new(&inst, Features { presetup: true });
    assert_eq!(space.len(), 4 + 3 * 4);
    for i in 0..space.len() {
        let a = space.action(i).unwrap();
        assert_eq!(space.index(a), Some(i));
    }
    assert_eq!(space.action(space.len()), None);
    assert_eq!(space.action(5), Some(Action::Presetup { machine: 0, setup: SetupId(1) }));
    assert_eq!(space.index(Action::Presetup { machine: 1, setup: SetupId(4) }), None);
    let plain = ActionSpace::new(&inst, Features::default());
    assert_eq!(plain.len(), 4);
    assert_eq!(plain.index(Action::Presetup { machine: 0, setup: SetupId(1) }), None);
}

#[test]
fn presetup_changes_setup_and_occupies_machine() {
    let mut env = Env::new(Arc::new(paper_instance()), RewardConfig::default(), Features { presetup: true }).unwrap();
    let a = Action::Presetup { machine: 1, setup: SetupId(3) };
    assert!(env.eligible_actions()[env.action_space().index(a).unwrap()]);
    // already neutral
    assert!(env.check_action(Action::Presetup { machine: 1, setup: SetupId(0) }).is_err());
    env.step(a).unwrap();
    assert_eq!(env.state().machines[1].current_setup, SetupId(3));
    assert!(env.state().machines[1].presetting);
    assert_eq!(env.state().next_event_time(), Some(8.0));
    env.step(assign(2)).unwrap();
    env.step(Action::Noop).unwrap();
    assert_eq!(env.clock(), 8.0);
    assert!(!env.state().machines[1].presetting);
    env.step(Action::Noop).unwrap();
    assert_eq!(env.clock(), 29.0);
    env.step(assign(2)).unwrap();
    // no setup left on M2: 10 transport + 16 processing
    assert_eq!(env.state().machines[1].busy_until, Some(55.0));
}

#[test]
fn full_buffer_blocks_machine() {
    let mut inst = paper_instance();
    inst.buffers[1].capacity = 30.0;
    let mut env = Env::new(Arc::new(inst), RewardConfig::default(), Features::default()).unwrap();
    for a in [assign(2), Action::Noop, assign(2), assign(0), Action::Noop] {
        env.step(a).unwrap();
    }
    // t=53: J1 needs 20 in B2, which already holds J3's 15
    assert_eq!(env.clock(), 53.0);
    assert_eq!(env.state().machines[0].blocked_by, Some(0));
    assert!(env.step(assign(0)).is_err());
    let err = env.step(assign(1)).unwrap_err();
    assert!(err.to_string().contains("blocked"), "{err}");

    // ten blocked minutes until J3 finishes on M2 at 63
    let r = env.step(Action::Noop).unwrap();
    assert_eq!(env.clock(), 63.0);
    assert_eq!(r.reward, -10.0 - 2.0 * 10.0);
    assert_eq!(env.state().stats.blocked_minutes, 10.0);

    env.step(assign(2)).unwrap();
    assert_eq!(env.state().machines[0].blocked_by, None);
    assert!(env.eligible_actions()[0]);
}

#[test]
fn deadlock_ends_episode_with_penalty() {
    let mut inst = paper_instance();
    // J3's second operation never fits B2; it blocks M1 and nothing else can start
    inst.buffers[1].capacity = 10.0;
    let mut env = Env::new(Arc::new(inst), RewardConfig::makespan(), Features::default()).unwrap();
    env.step(assign(2)).unwrap();
    let r = env.step(Action::Noop).unwrap();
    assert!(r.done && r.info.deadlock);
    assert_eq!(r.reward, -29.0 - 1000.0);
    assert!(env.state().deadlocked);
}

#[test]
fn return_is_minus_makespan_under_pure_time() {
    let inst = Arc::new(paper_instance());
    for h in Heuristic::ALL {
        let env = Env::new(inst.clone(), RewardConfig::pure_time(), Features::default()).unwrap();
        let r = rollout(env, &mut Agent::greedy(PolicyKind::heuristic(h)), 3).unwrap();
        assert!(!r.deadlocked);
        assert!((r.total_reward() + r.kpis.makespan).abs() < 1e-9, "{h:?}");
    }
}

#[test]
fn returns_match_reward_sums() {
    let env = paper_env(RewardConfig::default());
    let r = rollout(env, &mut Agent::greedy(PolicyKind::Edd), 0).unwrap();
    let rewards = r.rewards();
    assert_eq!(discounted_return(&rewards, 1.0), rewards.iter().sum::<f64>());
    let g: f64 = 0.9;
    let manual: f64 = rewards.iter().enumerate().map(|(t, r)| g.powi(t as i32) * r).sum();
    assert!((discounted_return(&rewards, g) - manual).abs() < 1e-9);
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let run = || {
        let env = paper_env(RewardConfig::default());
        let r = rollout(env, &mut Agent::greedy(PolicyKind::Random), 11).unwrap();
        serde_json::to_string(&r.trajectory).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn trajectory_log_replays() {
    let env = paper_env(RewardConfig::default());
    let r = rollout(env.clone(), &mut Agent::greedy(PolicyKind::Spt), 0).unwrap();
    let header = TrajectoryHeader::new(env.instance(), *env.config(), env.features());
    let mut buf = Vec::new();
    write_trajectory(&mut buf, &header, &r.trajectory).unwrap();
    let (h, records) = read_trajectory(buf.as_slice()).unwrap();
    assert_eq!(h, header);
    assert_eq!(records, r.trajectory);
    replay_trajectory(Arc::new(paper_instance()), &h, &records).unwrap();

    let mut tampered = records.clone();
    tampered[1].reward += 1.0;
    assert!(replay_trajectory(Arc::new(paper_instance()), &h, &tampered).is_err());
}

#[test]
fn env_kpis_match_validator() {
    let inst = Arc::new(paper_instance());
    for h in Heuristic::ALL {
        for seed in 0..5 {
            let env = Env::new(inst.clone(), RewardConfig::default(), Features::default()).unwrap();
            let r = rollout(env, &mut Agent::greedy(PolicyKind::heuristic(h)), seed).unwrap();
            assert!(validate_schedule(&inst, &r.schedule).unwrap().is_empty());
            let k = compute_kpis(&inst, &r.schedule).unwrap();
            assert!(k.approx_eq(&r.kpis), "{h:?}: {k:?} vs {:?}", r.kpis);
        }
    }
}

/// Random eligible actions, including pre-setups, on a random instance.
fn random_walk(seed: u64, presetup: bool) -> (Arc<Instance>, Vec<Env>) {
    let spec = GenSpec { seed, jobs: crate::io::Range::new(1, 5), machines: crate::io::Range::new(1, 4), ..Default::default() };
    let inst = Arc::new(generate_instance(&spec).unwrap());
    let mut env = Env::new(inst.clone(), RewardConfig::default(), Features { presetup }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut states = vec![env.clone()];
    let mut guard = 0;
    while !env.is_done() && guard < 2000 {
        guard += 1;
        let mask = env.eligible_actions();
        let eligible: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        let i = eligible[rng.gen_range(0..eligible.len())];
        env.step_index(i).unwrap();
        states.push(env.clone());
    }
    (inst, states)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn invariants_hold_along_random_walks(seed in 0u64..100_000, presetup in any::<bool>()) {
        let (inst, states) = random_walk(seed, presetup);
        let last = states.last().unwrap();
        prop_assert!(last.is_done());
        let mut clock = 0.0;
        for env in &states {
            let st = env.state();
            prop_assert!(st.clock >= clock);
            clock = st.clock;
            for (k, load) in st.buffer_load.iter().enumerate() {
                prop_assert!(*load <= inst.capacity(k) + 1e-9, "buffer {} at {}", k, load);
                prop_assert!(*load >= -1e-9);
            }
            let mask = env.eligible_actions();
            prop_assert!(env.is_done() || mask.iter().any(|&m| m));
            for i in 0..mask.len() {
                let a = env.action_space().action(i).unwrap();
                prop_assert_eq!(env.check_action(a).is_ok(), mask[i]);
            }
        }
        let schedule = last.schedule();
        let violations = validate_schedule(&inst, &schedule).unwrap();
        prop_assert!(violations.is_empty(), "{:?}", violations);
        if !last.state().deadlocked {
            let k = compute_kpis(&inst, &schedule).unwrap();
            prop_assert!(k.approx_eq(&last.kpis()), "{:?} vs {:?}", k, last.kpis());
        }
    }

    #[test]
    fn masked_actions_always_rejected(seed in 0u64..100_000, pick in 0usize..64) {
        let (_, states) = random_walk(seed, true);
        let env = &states[pick % states.len()];
        let mask = env.eligible_actions();
        for i in (0..mask.len()).filter(|&i| !mask[i]) {
            let mut copy = env.clone();
            prop_assert!(copy.step_index(i).is_err());
            prop_assert_eq!(copy.state(), env.state());
        }
    }
}
