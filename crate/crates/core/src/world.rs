//! Continuous two-lane road: vehicle state, kinematics and ground-truth collisions.
//!
//! Longitudinal positions `s` grow in the AV's heading. Left-lane traffic
//! moves in +s, Right-lane (oncoming) traffic in -s, all at
//! [`DEFAULT_SPEED`]. Traffic positions sit on a 21 m lattice offset by
//! [`GRID_PHASE`] from the AV's reference point, so each grid cell maps to
//! one lattice point at action-window boundaries.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Action, Lane, AV_SEGMENT};

pub const SEGMENT_LENGTH: f64 = 21.0;
/// 25.2 km/h: one segment per 3 s action window.
pub const DEFAULT_SPEED: f64 = 7.0;
/// 50.4 km/h.
pub const ACCELERATE_SPEED: f64 = 14.0;
/// Half the default speed (12.6 km/h).
pub const BRAKE_SPEED: f64 = 3.5;
/// 7 km/h floor while braking.
pub const MIN_AV_SPEED: f64 = 7.0 / 3.6;
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const VEHICLE_WIDTH: f64 = 1.8;
pub const LANE_SEPARATION: f64 = 3.5;
/// Offset of traffic lattice points inside a segment.
pub const GRID_PHASE: f64 = SEGMENT_LENGTH / 2.0;

pub type VehicleId = u32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("time step {0} s outside (0, 0.1]")]
    InvalidTimeStep(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousVehicle {
    pub id: VehicleId,
    pub lane: Lane,
    pub s: f64,
    /// Magnitude; direction follows from the lane.
    pub speed: f64,
    pub length: f64,
}

impl ContinuousVehicle {
    pub fn heading(&self) -> f64 {
        match self.lane {
            Lane::Left => 1.0,
            Lane::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AvMode {
    Drive,
    Accelerate,
    Brake,
    LaneChangeLeft,
    LaneChangeRight,
}

impl AvMode {
    pub fn for_action(action: Action) -> AvMode {
        match action {
            Action::Drive => AvMode::Drive,
            Action::Accelerate => AvMode::Accelerate,
            Action::Brake => AvMode::Brake,
            Action::LeftLaneChange => AvMode::LaneChangeLeft,
            Action::RightLaneChange => AvMode::LaneChangeRight,
        }
    }

    pub fn target_speed(self) -> f64 {
        match self {
            AvMode::Accelerate => ACCELERATE_SPEED,
            AvMode::Brake => BRAKE_SPEED,
            AvMode::Drive | AvMode::LaneChangeLeft | AvMode::LaneChangeRight => DEFAULT_SPEED,
        }
    }
}

/// AV motion parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Kinematics {
    /// Fixed simulation step in seconds.
    pub dt: f64,
    /// Bound on |dv/dt| for the AV in m/s^2.
    pub accel_limit: f64,
    /// Gain (1/s) pulling the AV back onto its lattice reference position.
    pub tracking_gain: f64,
    pub lane_change_time: f64,
    /// Duration of one Drive/Accelerate/lane-change window; Brake takes two.
    pub action_window: f64,
}

impl Default for Kinematics {
    fn default() -> Self {
        Kinematics {
            dt: 0.02,
            accel_limit: 20.0,
            tracking_gain: 1.0,
            lane_change_time: 3.0,
            action_window: 3.0,
        }
    }
}

impl Kinematics {
    pub fn window_ticks(&self, action: Action) -> u32 {
        let windows = if action == Action::Brake { 2.0 } else { 1.0 };
        (windows * self.action_window / self.dt).round() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousWorld {
    pub av: ContinuousVehicle,
    pub av_mode: AvMode,
    /// 0 at the Left-lane centreline, 1 at the Right-lane centreline.
    pub lateral: f64,
    /// Where the AV would be if every action hit its grid displacement exactly.
    pub reference_s: f64,
    pub others: Vec<ContinuousVehicle>,
    pub clock: f64,
    /// Integrated AV displacement in metres.
    pub odometer: f64,
    next_id: VehicleId,
}

impl ContinuousWorld {
    /// AV at s = 0 cruising at default speed, no traffic.
    pub fn new(av_lane: Lane) -> Self {
        ContinuousWorld {
            av: ContinuousVehicle {
                id: 0,
                lane: av_lane,
                s: 0.0,
                speed: DEFAULT_SPEED,
                length: VEHICLE_LENGTH,
            },
            av_mode: AvMode::Drive,
            lateral: match av_lane {
                Lane::Left => 0.0,
                Lane::Right => 1.0,
            },
            reference_s: 0.0,
            others: Vec::new(),
            clock: 0.0,
            odometer: 0.0,
            next_id: 1,
        }
    }

    pub fn add_vehicle(&mut self, lane: Lane, s: f64) -> VehicleId {
        let id = self.next_id;
        self.next_id += 1;
        self.others.push(ContinuousVehicle {
            id,
            lane,
            s,
            speed: DEFAULT_SPEED,
            length: VEHICLE_LENGTH,
        });
        id
    }

    /// Lattice position of grid cell `segment` relative to the AV's reference.
    pub fn cell_position(&self, segment: i32) -> f64 {
        self.reference_s + f64::from(segment - AV_SEGMENT) * SEGMENT_LENGTH + GRID_PHASE
    }

    pub fn relative_s(&self, vehicle: &ContinuousVehicle) -> f64 {
        vehicle.s - self.av.s
    }

    /// Lanes the AV body overlaps; both while a lane change is under way.
    pub fn av_occupies(&self, lane: Lane) -> bool {
        match lane {
            Lane::Left => self.lateral < 1.0,
            Lane::Right => self.lateral > 0.0,
        }
    }

    pub fn is_changing_lane(&self) -> bool {
        self.lateral > 0.0 && self.lateral < 1.0
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&ContinuousVehicle> {
        self.others.iter().find(|v| v.id == id)
    }
}

/// Advances the world by `dt` seconds.
///
/// The AV's speed command is its mode's nominal speed plus a correction
/// toward `reference_s`; actual speed follows the command at bounded
/// acceleration.
pub fn step(world: &mut ContinuousWorld, dt: f64, kin: &Kinematics) -> Result<(), WorldError> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(WorldError::InvalidTimeStep(dt));
    }
    let nominal = world.av_mode.target_speed();
    let error = world.reference_s - world.av.s;
    let command = (nominal + kin.tracking_gain * error).clamp(MIN_AV_SPEED, ACCELERATE_SPEED);
    let max_dv = kin.accel_limit * dt;
    world.av.speed += (command - world.av.speed).clamp(-max_dv, max_dv);
    world.av.s += world.av.speed * dt;
    world.odometer += world.av.speed * dt;
    world.reference_s += nominal * dt;

    let lateral_rate = dt / kin.lane_change_time;
    match world.av_mode {
        AvMode::LaneChangeRight => world.lateral = (world.lateral + lateral_rate).min(1.0),
        AvMode::LaneChangeLeft => world.lateral = (world.lateral - lateral_rate).max(0.0),
        _ => {}
    }

    for v in &mut world.others {
        v.s += v.heading() * v.speed * dt;
    }
    world.clock += dt;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub other: VehicleId,
    pub lane: Lane,
    /// Centre-to-centre longitudinal distance at detection.
    pub gap: f64,
}

/// First vehicle whose body overlaps the AV's, if any.
pub fn detect_collision(world: &ContinuousWorld) -> Option<Collision> {
    world
        .others
        .iter()
        .filter(|v| world.av_occupies(v.lane))
        .find_map(|v| {
            let gap = world.relative_s(v);
            (gap.abs() < (world.av.length + v.length) / 2.0).then_some(Collision {
                other: v.id,
                lane: v.lane,
                gap,
            })
        })
}
