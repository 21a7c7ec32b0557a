//! Traffic generation: initial population, despawning behind the AV and
//! replacement spawns ahead of each lane's farthest vehicle.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Lane, AV_SEGMENT};
use crate::world::{ContinuousWorld, VehicleId, SEGMENT_LENGTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpawnConfig {
    pub left_vehicles: usize,
    pub right_vehicles: usize,
    /// Segments between a new Left-lane vehicle and the current leader, drawn uniformly.
    pub left_gap_choices: Vec<u32>,
    /// Longest allowed run of Left-lane vehicles in adjacent segments.
    pub max_consecutive: usize,
    pub right_gap_choices: Vec<u32>,
    pub right_gap_weights: Vec<f64>,
    /// Vehicles further than this many segments behind the AV are removed.
    pub despawn_behind: u32,
}

impl Default for SpawnConfig {
    fn default() -> Self {
        SpawnConfig {
            left_vehicles: 10,
            right_vehicles: 4,
            left_gap_choices: vec![1, 2, 3, 4],
            max_consecutive: 3,
            right_gap_choices: vec![8, 12, 16, 20],
            right_gap_weights: vec![0.125, 0.25, 0.25, 0.375],
            despawn_behind: 5,
        }
    }
}

impl SpawnConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.left_gap_choices.is_empty() || self.left_gap_choices.contains(&0) {
            return Err("left_gap_choices must be non-empty and positive".into());
        }
        if self.max_consecutive == 0 || !self.left_gap_choices.iter().any(|&g| g > 1) {
            return Err("max_consecutive needs at least one left gap above 1".into());
        }
        if self.right_gap_choices.is_empty()
            || self.right_gap_choices.len() != self.right_gap_weights.len()
            || self.right_gap_choices.contains(&0)
        {
            return Err("right_gap_choices and right_gap_weights must pair up".into());
        }
        let total: f64 = self.right_gap_weights.iter().sum();
        if self.right_gap_weights.iter().any(|w| *w < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err("right_gap_weights must be non-negative and sum to 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpawnRecord {
    pub id: VehicleId,
    pub lane: Lane,
    pub s: f64,
    pub gap: u32,
}

/// Draws a Left-lane gap, redrawing 1 while the leader already ends a full run.
pub fn draw_left_gap<R: Rng + ?Sized>(cfg: &SpawnConfig, leader_run: usize, rng: &mut R) -> u32 {
    loop {
        let gap = cfg.left_gap_choices[rng.random_range(0..cfg.left_gap_choices.len())];
        if gap == 1 && leader_run >= cfg.max_consecutive {
            continue;
        }
        return gap;
    }
}

pub fn draw_right_gap<R: Rng + ?Sized>(cfg: &SpawnConfig, rng: &mut R) -> u32 {
    let dist = WeightedIndex::new(&cfg.right_gap_weights).expect("validated weights");
    cfg.right_gap_choices[dist.sample(rng)]
}

fn lane_positions(world: &ContinuousWorld, lane: Lane) -> Vec<f64> {
    let mut s: Vec<f64> = world.others.iter().filter(|v| v.lane == lane).map(|v| v.s).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Length of the run of adjacent Left-lane vehicles ending at the leader.
pub fn leader_run(world: &ContinuousWorld) -> usize {
    let s = lane_positions(world, Lane::Left);
    if s.is_empty() {
        return 0;
    }
    1 + s
        .windows(2)
        .take_while(|w| (w[0] - w[1] - SEGMENT_LENGTH).abs() < 1.0)
        .count()
}

/// Puts `target` on the 21 m lattice through `anchor`.
fn snap(target: f64, anchor: f64) -> f64 {
    anchor + ((target - anchor) / SEGMENT_LENGTH).round() * SEGMENT_LENGTH
}

fn spawn_left<R: Rng + ?Sized>(
    world: &mut ContinuousWorld,
    cfg: &SpawnConfig,
    anchor: Option<f64>,
    rng: &mut R,
) -> SpawnRecord {
    let run = leader_run(world);
    let gap = draw_left_gap(cfg, run, rng);
    let base = match lane_positions(world, Lane::Left).first() {
        Some(&leader) => leader,
        None => {
            let own = world.cell_position(AV_SEGMENT);
            anchor.map_or(own, |a| snap(own, a))
        }
    };
    let s = base + f64::from(gap) * SEGMENT_LENGTH;
    let id = world.add_vehicle(Lane::Left, s);
    SpawnRecord {
        id,
        lane: Lane::Left,
        s,
        gap,
    }
}

fn spawn_right<R: Rng + ?Sized>(
    world: &mut ContinuousWorld,
    cfg: &SpawnConfig,
    anchor: Option<f64>,
    rng: &mut R,
) -> SpawnRecord {
    let gap = draw_right_gap(cfg, rng);
    let base = match lane_positions(world, Lane::Right).first() {
        Some(&far) => {
            let own = world.cell_position(AV_SEGMENT);
            if far >= own {
                far
            } else {
                snap(own, far)
            }
        }
        None => {
            let own = world.cell_position(AV_SEGMENT);
            anchor.map_or(own, |a| snap(own, a))
        }
    };
    let s = base + f64::from(gap) * SEGMENT_LENGTH;
    let id = world.add_vehicle(Lane::Right, s);
    SpawnRecord {
        id,
        lane: Lane::Right,
        s,
        gap,
    }
}

/// Initial traffic around an empty world.
pub fn populate<R: Rng + ?Sized>(
    world: &mut ContinuousWorld,
    cfg: &SpawnConfig,
    rng: &mut R,
) -> Vec<SpawnRecord> {
    let mut out = Vec::with_capacity(cfg.left_vehicles + cfg.right_vehicles);
    for _ in 0..cfg.left_vehicles {
        out.push(spawn_left(world, cfg, None, rng));
    }
    for _ in 0..cfg.right_vehicles {
        out.push(spawn_right(world, cfg, None, rng));
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SpawnOutcome {
    pub removed: Vec<(VehicleId, Lane)>,
    pub spawned: Vec<SpawnRecord>,
}

/// Replaces every vehicle that fell more than `despawn_behind` segments
/// behind the AV with one of the same lane.
pub fn spawn_despawn<R: Rng + ?Sized>(
    world: &mut ContinuousWorld,
    cfg: &SpawnConfig,
    rng: &mut R,
) -> SpawnOutcome {
    let limit = -f64::from(cfg.despawn_behind) * SEGMENT_LENGTH;
    let av_s = world.av.s;
    if world.others.iter().all(|v| v.s - av_s >= limit) {
        return SpawnOutcome::default();
    }
    let mut outcome = SpawnOutcome::default();
    let mut anchors = Vec::new();
    world.others.retain(|v| {
        let keep = v.s - av_s >= limit;
        if !keep {
            outcome.removed.push((v.id, v.lane));
            anchors.push(v.s);
        }
        keep
    });
    for (&(_, lane), anchor) in outcome.removed.iter().zip(anchors) {
        let record = match lane {
            Lane::Left => spawn_left(world, cfg, Some(anchor), rng),
            Lane::Right => spawn_right(world, cfg, Some(anchor), rng),
        };
        outcome.spawned.push(record);
    }
    outcome
}
