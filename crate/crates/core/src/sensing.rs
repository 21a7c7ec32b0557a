//! Simulated sensors and discretisation of their readings into a [`GridState`].
//!
//! Three sensors are modelled: a ranged 360° sensor reporting Left-lane
//! vehicles, a long-range sensor looking down the Right lane, and a short
//! side sensor for a Right-lane vehicle alongside the AV. Noise is
//! per-detection dropout, Gaussian range jitter and per-scan phantoms.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::grid::{GridError, GridState, Lane, AV_SEGMENT, GRID_MAX, MAX_TRACKED};
use crate::world::{ContinuousWorld, VehicleId, SEGMENT_LENGTH};

/// Cells in front of the AV that the planner tracks.
pub const MAX_AHEAD: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occlusion {
    #[default]
    Off,
    /// A Left-lane vehicle hides every other one further out on the same side.
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub range_360: f64,
    pub range_front_right: f64,
    pub dropout_prob: f64,
    pub phantom_prob: f64,
    pub range_jitter_sigma: f64,
    /// Slack added to the AV's extent by the side sensor.
    pub side_margin: f64,
    pub occlusion: Occlusion,
}

impl Default for SensorConfig {
    fn default() -> Self {
        SensorConfig {
            range_360: 100.0,
            range_front_right: 357.0,
            dropout_prob: 0.0,
            phantom_prob: 0.0,
            range_jitter_sigma: 0.0,
            side_margin: 2.0,
            occlusion: Occlusion::Off,
        }
    }
}

impl SensorConfig {
    /// Same geometry with every noise source switched off.
    pub fn noise_free(&self) -> SensorConfig {
        SensorConfig {
            dropout_prob: 0.0,
            phantom_prob: 0.0,
            range_jitter_sigma: 0.0,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !(self.range_360 > 0.0 && self.range_front_right > 0.0) {
            return Err("sensor ranges must be positive".into());
        }
        if !prob(self.dropout_prob) || !prob(self.phantom_prob) {
            return Err("dropout_prob and phantom_prob must lie in [0, 1]".into());
        }
        if !(self.range_jitter_sigma >= 0.0 && self.side_margin >= 0.0) {
            return Err("range_jitter_sigma and side_margin must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Sensor360,
    FrontRight,
    RightSide,
    Phantom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub lane: Lane,
    pub relative_s: f64,
    pub jittered_s: f64,
    pub provenance: Provenance,
    /// Ground-truth vehicle, `None` for phantoms.
    pub source: Option<VehicleId>,
}

fn jitter<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
    } else {
        0.0
    }
}

fn dropped<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    p > 0.0 && rng.random_bool(p.min(1.0))
}

/// Left-lane vehicles within `range_360`.
pub fn scan_360<R: Rng + ?Sized>(
    world: &ContinuousWorld,
    cfg: &SensorConfig,
    rng: &mut R,
) -> Vec<Detection> {
    let mut visible: Vec<(f64, VehicleId)> = world
        .others
        .iter()
        .filter(|v| v.lane == Lane::Left)
        .map(|v| (world.relative_s(v), v.id))
        .filter(|(rel, _)| rel.abs() <= cfg.range_360)
        .collect();
    visible.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    if cfg.occlusion == Occlusion::Strict {
        let nearest_ahead = visible.iter().filter(|(r, _)| *r >= 0.0).map(|(r, _)| *r).next();
        let nearest_behind = visible.iter().filter(|(r, _)| *r < 0.0).map(|(r, _)| *r).next_back();
        visible.retain(|(r, _)| Some(*r) == nearest_ahead || Some(*r) == nearest_behind);
    }

    let mut out = Vec::with_capacity(visible.len() + 1);
    for (rel, id) in visible {
        if dropped(cfg.dropout_prob, rng) {
            continue;
        }
        out.push(Detection {
            lane: Lane::Left,
            relative_s: rel,
            jittered_s: rel + jitter(cfg.range_jitter_sigma, rng),
            provenance: Provenance::Sensor360,
            source: Some(id),
        });
    }
    if cfg.phantom_prob > 0.0 && rng.random_bool(cfg.phantom_prob.min(1.0)) {
        let rel = rng.random_range(-cfg.range_360..=cfg.range_360);
        out.push(Detection {
            lane: Lane::Left,
            relative_s: rel,
            jittered_s: rel,
            provenance: Provenance::Phantom,
            source: None,
        });
    }
    out
}

/// Nearest Right-lane vehicle ahead within `range_front_right`.
pub fn scan_front_right<R: Rng + ?Sized>(
    world: &ContinuousWorld,
    cfg: &SensorConfig,
    rng: &mut R,
) -> Option<Detection> {
    let (rel, id) = world
        .others
        .iter()
        .filter(|v| v.lane == Lane::Right)
        .map(|v| (world.relative_s(v), v.id))
        .filter(|(rel, _)| *rel > 0.0 && *rel <= cfg.range_front_right)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))?;
    if dropped(cfg.dropout_prob, rng) {
        return None;
    }
    Some(Detection {
        lane: Lane::Right,
        relative_s: rel,
        jittered_s: rel + jitter(cfg.range_jitter_sigma, rng),
        provenance: Provenance::FrontRight,
        source: Some(id),
    })
}

/// True if a Right-lane vehicle overlaps the AV's extent widened by `side_margin`.
pub fn scan_right_side<R: Rng + ?Sized>(
    world: &ContinuousWorld,
    cfg: &SensorConfig,
    _rng: &mut R,
) -> bool {
    world.others.iter().filter(|v| v.lane == Lane::Right).any(|v| {
        world.relative_s(v).abs() < (world.av.length + v.length) / 2.0 + cfg.side_margin
    })
}

/// Grid cell of a relative position; the AV's own cell covers [0, 21) m.
pub fn segment_of(jittered_s: f64) -> i32 {
    let seg = (jittered_s / SEGMENT_LENGTH).floor();
    AV_SEGMENT + seg.clamp(-1000.0, 1000.0) as i32
}

/// Several detections mapped onto one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub lane: Lane,
    pub segment: i32,
    pub sources: Vec<Option<VehicleId>>,
}

impl Merge {
    /// Two or more genuine vehicles collapsed into one occupant.
    pub fn hides_real_vehicle(&self) -> bool {
        self.sources.iter().filter(|s| s.is_some()).count() >= 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discretised {
    pub snapshot: GridState,
    pub merges: Vec<Merge>,
    /// Vehicle ids behind each tracked Left-lane segment.
    pub row_sources: Vec<(i32, Vec<Option<VehicleId>>)>,
}

/// Builds the planner snapshot from one scan.
///
/// Left-lane detections at or beyond the AV's cell keep the `MAX_AHEAD`
/// nearest; passed vehicles inside the grid are kept as well so their
/// positions stay visible to the planner.
pub fn discretise(
    detections: &[Detection],
    side: bool,
    av_lane: Lane,
) -> Result<Discretised, GridError> {
    let mut cells: BTreeMap<i32, Vec<Option<VehicleId>>> = BTreeMap::new();
    let mut oncoming: Option<(i32, Option<VehicleId>)> = None;
    let mut merges = Vec::new();

    for d in detections {
        let seg = segment_of(d.jittered_s);
        match d.lane {
            Lane::Left => {
                if (0..=GRID_MAX).contains(&seg) {
                    cells.entry(seg).or_default().push(d.source);
                }
            }
            Lane::Right => {
                let seg = seg.clamp(0, GRID_MAX);
                oncoming = match oncoming {
                    Some((cur, src)) if cur == seg => {
                        merges.push(Merge {
                            lane: Lane::Right,
                            segment: seg,
                            sources: vec![src, d.source],
                        });
                        Some((cur, src))
                    }
                    Some((cur, src)) if cur < seg => Some((cur, src)),
                    _ => Some((seg, d.source)),
                };
            }
        }
    }

    let ahead: Vec<i32> = cells.range(AV_SEGMENT..).take(MAX_AHEAD).map(|(s, _)| *s).collect();
    let behind_cap = MAX_TRACKED - ahead.len();
    let behind: Vec<i32> = {
        let all: Vec<i32> = cells.range(..AV_SEGMENT).map(|(s, _)| *s).collect();
        all[all.len().saturating_sub(behind_cap)..].to_vec()
    };
    let row: Vec<i32> = behind.into_iter().chain(ahead).collect();

    let mut row_sources = Vec::with_capacity(row.len());
    for &seg in &row {
        let sources = cells[&seg].clone();
        if sources.len() > 1 {
            merges.push(Merge {
                lane: Lane::Left,
                segment: seg,
                sources: sources.clone(),
            });
        }
        row_sources.push((seg, sources));
    }

    let ov = oncoming.map(|(s, _)| s).or(side.then_some(AV_SEGMENT));
    let snapshot = GridState::new(av_lane, &row, ov, 0)?;
    Ok(Discretised {
        snapshot,
        merges,
        row_sources,
    })
}

/// One complete sensor sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub detections: Vec<Detection>,
    pub side: bool,
    pub discretised: Discretised,
}

pub fn sense<R: Rng + ?Sized>(
    world: &ContinuousWorld,
    cfg: &SensorConfig,
    rng: &mut R,
) -> Result<SensorFrame, GridError> {
    let mut detections = scan_360(world, cfg, rng);
    detections.extend(scan_front_right(world, cfg, rng));
    let side = scan_right_side(world, cfg, rng);
    let discretised = discretise(&detections, side, world.av.lane)?;
    Ok(SensorFrame {
        detections,
        side,
        discretised,
    })
}
