//! Closed-loop simulation: sense, plan, execute, spawn, repeat.

pub mod controller;
pub mod spawn;

use std::collections::{HashSet, VecDeque};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{predict, Action, GridState, Lane, AV_SEGMENT};
use crate::planner::{plan_with_fallback, PlannerMode, SearchLimits};
use crate::sensing::{sense, Discretised, SensorConfig, MAX_AHEAD};
use crate::world::{detect_collision, ContinuousWorld, Kinematics, VehicleId};

pub use controller::{execute_plan, Controller, ExecutionReport};
pub use spawn::{populate, spawn_despawn, SpawnConfig, SpawnRecord};

const SENSE_STREAM: u64 = 1;
const SPAWN_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FailureCause {
    FakeGap,
    PhantomObstacle,
    SameSegmentMerge,
    PlannerNoPath,
    GroundTruthCollision,
    ManualStop,
}

impl FailureCause {
    pub const ALL: [FailureCause; 6] = [
        FailureCause::FakeGap,
        FailureCause::PhantomObstacle,
        FailureCause::SameSegmentMerge,
        FailureCause::PlannerNoPath,
        FailureCause::GroundTruthCollision,
        FailureCause::ManualStop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FailureCause::FakeGap => "FakeGap",
            FailureCause::PhantomObstacle => "PhantomObstacle",
            FailureCause::SameSegmentMerge => "SameSegmentMerge",
            FailureCause::PlannerNoPath => "PlannerNoPath",
            FailureCause::GroundTruthCollision => "GroundTruthCollision",
            FailureCause::ManualStop => "ManualStop",
        }
    }

    /// Sensor-induced causes.
    pub fn is_sensor_fault(self) -> bool {
        matches!(
            self,
            FailureCause::FakeGap | FailureCause::PhantomObstacle | FailureCause::SameSegmentMerge
        )
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopLimits {
    pub max_distance_km: Option<f64>,
    pub max_sim_time_s: Option<f64>,
    pub max_overtakes: Option<u32>,
}

impl Default for StopLimits {
    fn default() -> Self {
        StopLimits {
            max_distance_km: Some(2.0),
            max_sim_time_s: None,
            max_overtakes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub sensor: SensorConfig,
    pub spawn: SpawnConfig,
    pub search: SearchLimits,
    pub kinematics: Kinematics,
    pub limits: StopLimits,
    /// Record a world sample every this many ticks; 0 disables tracing.
    pub trace_every: u32,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.sensor.validate()?;
        self.spawn.validate()?;
        self.search.validate().map_err(|e| e.to_string())?;
        let k = &self.kinematics;
        if !(k.dt > 0.0 && k.dt <= 0.1) {
            return Err(format!("kinematics.dt {} outside (0, 0.1]", k.dt));
        }
        if !(k.accel_limit > 0.0 && k.tracking_gain >= 0.0) {
            return Err("kinematics.accel_limit must be positive".into());
        }
        if !(k.lane_change_time > 0.0 && k.lane_change_time <= k.action_window) {
            return Err("lane_change_time must fit inside one action window".into());
        }
        let l = &self.limits;
        if l.max_distance_km.is_none() && l.max_sim_time_s.is_none() && l.max_overtakes.is_none() {
            return Err("at least one stop limit is required".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    /// World time; planning happens with the clock stopped.
    pub sim_time: f64,
    pub overtaken_count: u32,
    pub distance_km: f64,
    pub failure_cause: FailureCause,
    pub plans: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanTrigger {
    QueueEmpty,
    NewVehicle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Plan {
        t: f64,
        trigger: ReplanTrigger,
        snapshot: String,
        mode: Option<PlannerMode>,
        actions: Vec<Action>,
        states_expanded: u64,
    },
    PlanFailed {
        t: f64,
        snapshot: String,
        reason: String,
    },
    Spawn {
        t: f64,
        id: VehicleId,
        lane: Lane,
        s: f64,
        gap: u32,
    },
    Despawn {
        t: f64,
        id: VehicleId,
        lane: Lane,
    },
    Overtake {
        t: f64,
        id: VehicleId,
        total: u32,
    },
    Collision {
        t: f64,
        other: VehicleId,
        lane: Lane,
        gap: f64,
    },
    Stop {
        t: f64,
        cause: FailureCause,
        observed: Option<String>,
        truth: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub av_s: f64,
    pub av_speed: f64,
    pub lateral: f64,
    pub others: Vec<(VehicleId, Lane, f64)>,
}

/// Observed and noise-free snapshots taken when the current plan was made.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanContext {
    pub observed: Discretised,
    pub truth: Discretised,
}

/// Classifies the difference between an observed snapshot and ground truth.
pub fn classify_snapshot(observed: &Discretised, truth: &Discretised) -> Option<FailureCause> {
    if observed.merges.iter().any(|m| m.hides_real_vehicle()) {
        return Some(FailureCause::SameSegmentMerge);
    }
    let obs = &observed.snapshot;
    let tru = &truth.snapshot;
    // a vehicle pushed past a full row of tracked cells is displaced, not missed
    let obs_horizon = horizon(obs);
    let tru_horizon = horizon(tru);
    let missing = tru
        .front_vehicles
        .iter()
        .any(|s| s <= obs_horizon && !obs.front_vehicles.contains(s))
        || (tru.oncoming.is_some() && tru.oncoming != obs.oncoming);
    if missing {
        return Some(FailureCause::FakeGap);
    }
    let extra = obs
        .front_vehicles
        .iter()
        .any(|s| s <= tru_horizon && !tru.front_vehicles.contains(s))
        || (obs.oncoming.is_some() && tru.oncoming != obs.oncoming);
    extra.then_some(FailureCause::PhantomObstacle)
}

fn horizon(state: &GridState) -> i32 {
    let ahead: Vec<i32> = state.front_vehicles.iter().filter(|&s| s >= AV_SEGMENT).collect();
    if ahead.len() >= MAX_AHEAD {
        ahead[ahead.len() - 1]
    } else {
        i32::MAX
    }
}

/// Whether `observed` holds a vehicle the running plan did not account for.
pub fn has_new_vehicle(observed: &GridState, expected: &GridState) -> bool {
    observed.front_vehicles.iter().any(|s| !expected.front_vehicles.contains(s))
        || observed.oncoming.is_some_and(|ov| expected.oncoming != Some(ov))
}

/// Nothing left to overtake: Left lane and no tracked vehicle at or ahead of the AV.
fn clear_road(snapshot: &GridState) -> bool {
    !snapshot.crashed
        && snapshot.av_lane == Lane::Left
        && snapshot.front_vehicles.iter().all(|s| s < AV_SEGMENT)
}

pub struct Simulation {
    cfg: SimConfig,
    seed: u64,
    world: ContinuousWorld,
    controller: Controller,
    sense_rng: ChaCha8Rng,
    spawn_rng: ChaCha8Rng,
    truth_rng: ChaCha8Rng,
    expected: VecDeque<GridState>,
    last_expected: Option<GridState>,
    /// The latest planning attempt and the one before it.
    contexts: VecDeque<PlanContext>,
    counted: HashSet<VehicleId>,
    overtaken: u32,
    plans: u32,
    ticks: u64,
    events: Vec<Event>,
    trace: Vec<TraceSample>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl Simulation {
    pub fn new(cfg: SimConfig, seed: u64) -> Result<Self, String> {
        cfg.validate()?;
        let mut spawn_rng = stream(seed, SPAWN_STREAM);
        let mut world = ContinuousWorld::new(Lane::Left);
        let initial = populate(&mut world, &cfg.spawn, &mut spawn_rng);
        let events = initial
            .into_iter()
            .map(|r| Event::Spawn {
                t: 0.0,
                id: r.id,
                lane: r.lane,
                s: r.s,
                gap: r.gap,
            })
            .collect();
        Ok(Self::with_world(cfg, seed, world, spawn_rng, events))
    }

    /// Starts from a prepared world; no initial traffic is generated.
    pub fn from_world(cfg: SimConfig, seed: u64, world: ContinuousWorld) -> Result<Self, String> {
        cfg.validate()?;
        let spawn_rng = stream(seed, SPAWN_STREAM);
        Ok(Self::with_world(cfg, seed, world, spawn_rng, Vec::new()))
    }

    fn with_world(
        cfg: SimConfig,
        seed: u64,
        world: ContinuousWorld,
        spawn_rng: ChaCha8Rng,
        events: Vec<Event>,
    ) -> Self {
        Simulation {
            cfg,
            seed,
            world,
            controller: Controller::new(),
            sense_rng: stream(seed, SENSE_STREAM),
            spawn_rng,
            truth_rng: ChaCha8Rng::seed_from_u64(0),
            expected: VecDeque::new(),
            last_expected: None,
            contexts: VecDeque::with_capacity(2),
            counted: HashSet::new(),
            overtaken: 0,
            plans: 0,
            ticks: 0,
            events,
            trace: Vec::new(),
        }
    }

    pub fn world(&self) -> &ContinuousWorld {
        &self.world
    }

    pub fn controller(&self) -> &Controller {
        &self.controller
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn trace(&self) -> &[TraceSample] {
        &self.trace
    }

    pub fn last_plan(&self) -> Option<&PlanContext> {
        self.contexts.back()
    }

    /// Senses and plans if the queue ran dry or an unexpected vehicle shows
    /// up. Only valid between action windows.
    pub fn maybe_replan(&mut self) -> Result<Option<ReplanTrigger>, FailureCause> {
        debug_assert!(self.controller.is_idle());
        let clock = self.world.clock;
        let frame = sense(&self.world, &self.cfg.sensor, &mut self.sense_rng)
            .map_err(|_| FailureCause::PlannerNoPath)?;
        let observed = frame.discretised;
        let trigger = if self.controller.pending().is_empty() {
            ReplanTrigger::QueueEmpty
        } else if self
            .last_expected
            .is_none_or(|e| has_new_vehicle(&observed.snapshot, &e))
        {
            ReplanTrigger::NewVehicle
        } else {
            return Ok(None);
        };

        let truth = sense(&self.world, &self.cfg.sensor.noise_free(), &mut self.truth_rng)
            .map_err(|_| FailureCause::PlannerNoPath)?
            .discretised;
        let snapshot = observed.snapshot;
        if self.contexts.len() == 2 {
            self.contexts.pop_front();
        }
        self.contexts.push_back(PlanContext { observed, truth });

        let result = if clear_road(&snapshot) {
            Ok((vec![Action::Drive], None, 0))
        } else {
            plan_with_fallback(&snapshot, &self.cfg.search)
                .map(|p| (p.actions, Some(p.mode), p.states_expanded as u64))
        };
        debug_assert_eq!(clock, self.world.clock);

        match result {
            Ok((actions, mode, states_expanded)) => {
                self.plans += 1;
                self.controller.load(&actions);
                self.last_expected = Some(snapshot);
                let mut state = snapshot;
                self.expected = actions
                    .iter()
                    .map(|&a| {
                        state = predict(&state, a);
                        state
                    })
                    .collect();
                tracing::debug!(t = clock, %snapshot, ?mode, ?actions, "plan");
                self.events.push(Event::Plan {
                    t: clock,
                    trigger,
                    snapshot: snapshot.to_string(),
                    mode,
                    actions,
                    states_expanded,
                });
                Ok(Some(trigger))
            }
            Err(err) => {
                tracing::debug!(t = clock, %snapshot, %err, "planning failed");
                self.events.push(Event::PlanFailed {
                    t: clock,
                    snapshot: snapshot.to_string(),
                    reason: err.to_string(),
                });
                Err(self.attribute(FailureCause::PlannerNoPath))
            }
        }
    }

    /// Blames the newest sensor fault among the latest planning attempt and
    /// the plan that was running before it.
    fn attribute(&self, fallback: FailureCause) -> FailureCause {
        self.contexts
            .iter()
            .rev()
            .find_map(|c| classify_snapshot(&c.observed, &c.truth))
            .unwrap_or(fallback)
    }

    fn limit_hit(&self) -> bool {
        let l = &self.cfg.limits;
        l.max_distance_km.is_some_and(|d| self.world.odometer / 1000.0 >= d)
            || l.max_sim_time_s.is_some_and(|t| self.world.clock >= t)
            || l.max_overtakes.is_some_and(|n| self.overtaken >= n)
    }

    fn count_overtakes(&mut self) {
        if self.world.lateral != 0.0 {
            return;
        }
        let av_s = self.world.av.s;
        for v in &self.world.others {
            if v.lane == Lane::Left && v.s < av_s && self.counted.insert(v.id) {
                self.overtaken += 1;
                self.events.push(Event::Overtake {
                    t: self.world.clock,
                    id: v.id,
                    total: self.overtaken,
                });
            }
        }
    }

    fn traffic(&mut self) {
        let out = spawn_despawn(&mut self.world, &self.cfg.spawn, &mut self.spawn_rng);
        let t = self.world.clock;
        for (id, lane) in out.removed {
            self.counted.remove(&id);
            self.events.push(Event::Despawn { t, id, lane });
        }
        for r in out.spawned {
            self.events.push(Event::Spawn {
                t,
                id: r.id,
                lane: r.lane,
                s: r.s,
                gap: r.gap,
            });
        }
    }

    fn record_trace(&mut self) {
        let every = u64::from(self.cfg.trace_every);
        if every == 0 || !self.ticks.is_multiple_of(every) {
            return;
        }
        self.trace.push(TraceSample {
            t: self.world.clock,
            av_s: self.world.av.s,
            av_speed: self.world.av.speed,
            lateral: self.world.lateral,
            others: self.world.others.iter().map(|v| (v.id, v.lane, v.s)).collect(),
        });
    }

    /// Runs until a collision, a planning failure or a stop limit.
    pub fn run(&mut self) -> RunMetrics {
        let cause = loop {
            if self.limit_hit() {
                break FailureCause::ManualStop;
            }
            if self.controller.is_idle() {
                if let Err(cause) = self.maybe_replan() {
                    break cause;
                }
                if self.controller.begin_next(&mut self.world, &self.cfg.kinematics).is_none() {
                    break self.attribute(FailureCause::PlannerNoPath);
                }
            }
            match self.controller.tick(&mut self.world, &self.cfg.kinematics) {
                Ok(Some(_)) => self.last_expected = self.expected.pop_front(),
                Ok(None) => {}
                Err(_) => break FailureCause::ManualStop,
            }
            self.ticks += 1;
            if let Some(c) = detect_collision(&self.world) {
                tracing::debug!(t = self.world.clock, other = c.other, "collision");
                self.events.push(Event::Collision {
                    t: self.world.clock,
                    other: c.other,
                    lane: c.lane,
                    gap: c.gap,
                });
                break self.attribute(FailureCause::GroundTruthCollision);
            }
            self.traffic();
            self.count_overtakes();
            self.record_trace();
        };
        self.events.push(Event::Stop {
            t: self.world.clock,
            cause,
            observed: self.last_plan().map(|c| c.observed.snapshot.to_string()),
            truth: self.last_plan().map(|c| c.truth.snapshot.to_string()),
        });
        self.metrics(cause)
    }

    pub fn metrics(&self, cause: FailureCause) -> RunMetrics {
        RunMetrics {
            seed: self.seed,
            sim_time: self.world.clock,
            overtaken_count: self.overtaken,
            distance_km: self.world.odometer / 1000.0,
            failure_cause: cause,
            plans: self.plans,
        }
    }
}

/// Convenience wrapper: build, run, return metrics and the event log.
pub fn simulate(cfg: &SimConfig, seed: u64) -> Result<(RunMetrics, Vec<Event>), String> {
    let mut sim = Simulation::new(cfg.clone(), seed)?;
    let metrics = sim.run();
    Ok((metrics, sim.events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_world() -> ContinuousWorld {
        let mut w = ContinuousWorld::new(Lane::Left);
        let s = w.cell_position(14);
        w.add_vehicle(Lane::Left, s);
        w
    }

    #[test]
    fn empty_queue_replans_then_holds() {
        let cfg = SimConfig::default();
        let mut sim = Simulation::from_world(cfg, 1, quiet_world()).unwrap();
        assert_eq!(sim.maybe_replan(), Ok(Some(ReplanTrigger::QueueEmpty)));
        let clock = sim.world().clock;
        assert_eq!(sim.maybe_replan(), Ok(None));
        assert_eq!(sim.world().clock, clock);
    }

    #[test]
    fn new_oncoming_vehicle_triggers_replan() {
        let cfg = SimConfig::default();
        let mut sim = Simulation::from_world(cfg, 1, quiet_world()).unwrap();
        sim.maybe_replan().unwrap();
        sim.controller.begin_next(&mut sim.world, &sim.cfg.kinematics);
        while sim.controller.tick(&mut sim.world, &sim.cfg.kinematics).unwrap().is_none() {}
        sim.last_expected = sim.expected.pop_front();
        assert!(!sim.controller.pending().is_empty());
        assert_eq!(sim.maybe_replan(), Ok(None));
        let s = sim.world.cell_position(26);
        sim.world.add_vehicle(Lane::Right, s);
        assert_eq!(sim.maybe_replan(), Ok(Some(ReplanTrigger::NewVehicle)));
    }

    #[test]
    fn zero_distance_limit_stops_immediately() {
        let cfg = SimConfig {
            limits: StopLimits {
                max_distance_km: Some(0.0),
                ..StopLimits::default()
            },
            ..SimConfig::default()
        };
        let (m, _) = simulate(&cfg, 3).unwrap();
        assert_eq!(m.failure_cause, FailureCause::ManualStop);
        assert_eq!(m.sim_time, 0.0);
    }

    #[test]
    fn short_noise_free_run() {
        let (m, events) = simulate(&SimConfig::default(), 11).unwrap();
        assert_eq!(m.failure_cause, FailureCause::ManualStop, "{events:?}");
        assert!(m.distance_km >= 2.0);
    }
}
