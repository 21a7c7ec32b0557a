use overtake_core::grid::{replay, GridState, Lane, AV_SEGMENT};
use overtake_core::planner::{plan_with_fallback, SearchLimits};
use overtake_core::sensing::{sense, SensorConfig};
use overtake_core::sim::{
    execute_plan, populate, simulate, spawn_despawn, Event, FailureCause, ReplanTrigger, SimConfig,
    Simulation, SpawnConfig, StopLimits,
};
use overtake_core::world::{ContinuousWorld, Kinematics, SEGMENT_LENGTH};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_snapshot(rng: &mut ChaCha8Rng) -> GridState {
    let lane = if rng.random_bool(0.5) { Lane::Left } else { Lane::Right };
    let mut fv: Vec<i32> = (6..AV_SEGMENT).filter(|_| rng.random_bool(0.2)).collect();
    let mut ahead: Vec<i32> = (AV_SEGMENT + 1..=14).filter(|_| rng.random_bool(0.4)).collect();
    ahead.truncate(3);
    fv.extend(ahead);
    let ov = rng.random_bool(0.6).then(|| rng.random_range(12..=26));
    GridState::new(lane, &fv, ov, 0).unwrap()
}

fn world_for(snapshot: &GridState) -> ContinuousWorld {
    let mut w = ContinuousWorld::new(snapshot.av_lane);
    for c in snapshot.front_vehicles.iter() {
        let s = w.cell_position(c);
        w.add_vehicle(Lane::Left, s);
    }
    if let Some(ov) = snapshot.oncoming_segment() {
        let s = w.cell_position(ov);
        w.add_vehicle(Lane::Right, s);
    }
    w
}

/// Plans made on the grid execute without contact in the continuous world,
/// and the world re-discretises to the predicted cells after every action.
#[test]
fn grid_plans_are_safe_in_continuous_world() {
    let kin = Kinematics::default();
    let limits = SearchLimits::default();
    let cfg = SensorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut executed = 0;
    let mut scenarios = 0;
    while executed < 1000 {
        scenarios += 1;
        assert!(scenarios < 20_000, "too few plannable scenarios");
        let snap = random_snapshot(&mut rng);
        if snap.is_terminal() {
            continue;
        }
        let Ok(p) = plan_with_fallback(&snap, &limits) else { continue };
        executed += 1;
        let predicted = replay(&limits.model(), &snap, &p.actions).unwrap();
        let mut w = world_for(&snap);
        for (i, &a) in p.actions.iter().enumerate() {
            let report = execute_plan(&mut w, &[a], &kin, |_| {}).unwrap();
            assert!(report.collision.is_none(), "{snap} {:?} at {i}: {:?}", p.actions, report.collision);
            let expect = &predicted.states[i + 1];
            assert_eq!(w.av.lane, expect.av_lane);
            let seen = sense(&w, &cfg, &mut rng).unwrap().discretised.snapshot;
            let ahead = |s: &GridState| -> Vec<i32> {
                s.front_vehicles.iter().filter(|&c| (AV_SEGMENT..=14).contains(&c)).collect()
            };
            assert_eq!(ahead(&seen), ahead(expect), "{snap} {:?} at {i}", p.actions);
            if let Some(ov) = expect.oncoming_segment().filter(|&ov| (12..=26).contains(&ov)) {
                assert_eq!(seen.oncoming_segment(), Some(ov), "{snap} {:?} at {i}", p.actions);
            }
        }
    }
}

#[test]
fn spawner_conserves_lane_counts() {
    let cfg = SpawnConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut w = ContinuousWorld::new(Lane::Left);
    populate(&mut w, &cfg, &mut rng);
    let count = |w: &ContinuousWorld, lane| w.others.iter().filter(|v| v.lane == lane).count();
    for _ in 0..2000 {
        w.av.s += SEGMENT_LENGTH;
        w.reference_s += SEGMENT_LENGTH;
        let out = spawn_despawn(&mut w, &cfg, &mut rng);
        assert_eq!(out.removed.len(), out.spawned.len());
        for ((_, lane), rec) in out.removed.iter().zip(&out.spawned) {
            assert_eq!(*lane, rec.lane);
            let phase = (rec.s - w.reference_s).rem_euclid(SEGMENT_LENGTH);
            assert!((phase - SEGMENT_LENGTH / 2.0).abs() < 1e-6, "{phase}");
        }
        assert_eq!(count(&w, Lane::Left), cfg.left_vehicles);
        assert_eq!(count(&w, Lane::Right), cfg.right_vehicles);
    }
}

fn noisy_config() -> SimConfig {
    SimConfig {
        sensor: SensorConfig {
            dropout_prob: 0.05,
            phantom_prob: 0.01,
            range_jitter_sigma: 1.0,
            ..SensorConfig::default()
        },
        limits: StopLimits {
            max_distance_km: Some(50.0),
            ..StopLimits::default()
        },
        trace_every: 50,
        ..SimConfig::default()
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = noisy_config();
    for seed in [1, 2, 3] {
        let a = simulate(&cfg, seed).unwrap();
        let b = simulate(&cfg, seed).unwrap();
        assert_eq!(a, b);
    }
    assert_ne!(simulate(&cfg, 1).unwrap().1, simulate(&cfg, 2).unwrap().1);
}

#[test]
fn noisy_runs_stop_on_sensor_faults() {
    let cfg = noisy_config();
    for seed in 0..6 {
        let (m, events) = simulate(&cfg, seed).unwrap();
        assert!(
            m.failure_cause.is_sensor_fault() || m.failure_cause == FailureCause::GroundTruthCollision,
            "seed {seed}: {}",
            m.failure_cause
        );
        assert!(matches!(events.last(), Some(Event::Stop { cause, .. }) if *cause == m.failure_cause));
    }
}

#[test]
fn planning_does_not_advance_the_world() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let snap = random_snapshot(&mut rng);
        if snap.is_terminal() {
            continue;
        }
        let w = world_for(&snap);
        let before: Vec<f64> = w.others.iter().map(|v| v.s).collect();
        let mut sim = Simulation::from_world(SimConfig::default(), 1, w).unwrap();
        let _ = sim.maybe_replan();
        assert_eq!(sim.world().clock, 0.0);
        assert_eq!(sim.world().av.s, 0.0);
        let after: Vec<f64> = sim.world().others.iter().map(|v| v.s).collect();
        assert_eq!(before, after);
    }
}

#[test]
fn full_queue_holds_the_plan() {
    let mut w = ContinuousWorld::new(Lane::Left);
    let s = w.cell_position(14);
    w.add_vehicle(Lane::Left, s);
    let mut sim = Simulation::from_world(SimConfig::default(), 1, w).unwrap();
    assert_eq!(sim.maybe_replan(), Ok(Some(ReplanTrigger::QueueEmpty)));
    assert_eq!(sim.maybe_replan(), Ok(None));
}

#[test]
fn noise_free_runs_finish_cleanly() {
    let cfg = SimConfig::default();
    for seed in 0..5 {
        let (m, events) = simulate(&cfg, seed).unwrap();
        assert_eq!(m.failure_cause, FailureCause::ManualStop, "seed {seed}");
        assert!(m.distance_km >= 2.0);
        let overtakes = events.iter().filter(|e| matches!(e, Event::Overtake { .. })).count();
        assert_eq!(overtakes as u32, m.overtaken_count);
    }
}
