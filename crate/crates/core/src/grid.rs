//! Discrete AV-centred road model.
//!
//! The ego vehicle (AV) is pinned at segment [`AV_SEGMENT`]; every action is
//! expressed as a shift of the other vehicles relative to it. Left is the
//! AV's travel lane, Right carries oncoming traffic.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Segment the AV always occupies.
pub const AV_SEGMENT: i32 = 10;
/// Highest modelled segment (17 segments of front-right sensor range ahead of the AV).
pub const GRID_MAX: i32 = 27;
/// Default lane-change budget per plan.
pub const DEFAULT_MAX_LANE_CHANGES: u8 = 4;
/// Capacity of the tracked left-lane row (vehicles ahead plus vehicles already passed).
pub const MAX_TRACKED: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("action {0} is not enabled in this state")]
    ActionDisabled(Action),
    #[error("state is terminal (crashed or overtaken)")]
    TerminalState,
    #[error("invalid grid state: {0}")]
    InvalidState(String),
    #[error("cannot parse grid state: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Lane {
    Left,
    Right,
}

impl Lane {
    pub fn other(self) -> Lane {
        match self {
            Lane::Left => Lane::Right,
            Lane::Right => Lane::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    LeftLaneChange,
    RightLaneChange,
    Accelerate,
    Brake,
    Drive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LaneEffect {
    None,
    ToLeft,
    ToRight,
}

/// Net relative motion of the other vehicles caused by one AV action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionDelta {
    pub fv_delta: i32,
    pub ov_delta: i32,
    pub lane_effect: LaneEffect,
}

impl Action {
    /// Exploration order used by the planner's depth-first search.
    pub const CANONICAL_ORDER: [Action; 5] = [
        Action::LeftLaneChange,
        Action::Accelerate,
        Action::RightLaneChange,
        Action::Drive,
        Action::Brake,
    ];

    pub fn delta(self) -> ActionDelta {
        let (fv_delta, ov_delta, lane_effect) = match self {
            Action::Drive => (0, -2, LaneEffect::None),
            Action::Accelerate => (-1, -3, LaneEffect::None),
            Action::LeftLaneChange => (0, -2, LaneEffect::ToLeft),
            Action::RightLaneChange => (0, -2, LaneEffect::ToRight),
            // two default-speed time steps at half speed, folded into one action
            Action::Brake => (1, -3, LaneEffect::None),
        };
        ActionDelta {
            fv_delta,
            ov_delta,
            lane_effect,
        }
    }

    pub fn is_lane_change(self) -> bool {
        matches!(self, Action::LeftLaneChange | Action::RightLaneChange)
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::LeftLaneChange => "LeftLaneChange",
            Action::RightLaneChange => "RightLaneChange",
            Action::Accelerate => "Accelerate",
            Action::Brake => "Brake",
            Action::Drive => "Drive",
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Action::LeftLaneChange => "LLC",
            Action::RightLaneChange => "RLC",
            Action::Accelerate => "ACC",
            Action::Brake => "BRK",
            Action::Drive => "DRV",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = GridError;

    /// Accepts full names, short codes and snake_case names, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| *c != '_' && *c != '-')
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "leftlanechange" | "llc" => Ok(Action::LeftLaneChange),
            "rightlanechange" | "rlc" => Ok(Action::RightLaneChange),
            "accelerate" | "acc" => Ok(Action::Accelerate),
            "brake" | "brk" => Ok(Action::Brake),
            "drive" | "drv" => Ok(Action::Drive),
            _ => Err(GridError::Parse(format!("unknown action `{}`", s.trim()))),
        }
    }
}

/// Ascending row of tracked left-lane vehicle segments.
///
/// Holds the vehicles ahead of the AV as well as vehicles it has already
/// passed; all of them shift by the same delta, so the order never changes.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Convoy {
    slots: [u8; MAX_TRACKED],
    len: u8,
}

impl Convoy {
    pub const EMPTY: Convoy = Convoy {
        slots: [0; MAX_TRACKED],
        len: 0,
    };

    pub fn from_segments(segments: &[i32]) -> Result<Self, GridError> {
        if segments.len() > MAX_TRACKED {
            return Err(GridError::InvalidState(format!(
                "{} tracked vehicles exceeds capacity {MAX_TRACKED}",
                segments.len()
            )));
        }
        let mut convoy = Convoy::EMPTY;
        for &seg in segments {
            if !(0..=GRID_MAX).contains(&seg) {
                return Err(GridError::InvalidState(format!(
                    "front vehicle segment {seg} outside 0..={GRID_MAX}"
                )));
            }
            if let Some(last) = convoy.iter().last() {
                if seg <= last {
                    return Err(GridError::InvalidState(
                        "front vehicles must be strictly ascending".into(),
                    ));
                }
            }
            convoy.slots[convoy.len as usize] = seg as u8;
            convoy.len += 1;
        }
        Ok(convoy)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = i32> + '_ {
        self.slots[..self.len as usize].iter().map(|&s| s as i32)
    }

    pub fn to_vec(&self) -> Vec<i32> {
        self.iter().collect()
    }

    pub fn contains(&self, segment: i32) -> bool {
        self.iter().any(|s| s == segment)
    }

    /// Nearest tracked vehicle strictly ahead of the AV.
    pub fn nearest_ahead(&self) -> Option<i32> {
        self.iter().find(|&s| s > AV_SEGMENT)
    }

    pub fn max(&self) -> Option<i32> {
        self.iter().last()
    }

    fn push(&mut self, segment: i32) {
        self.slots[self.len as usize] = segment as u8;
        self.len += 1;
    }
}

impl fmt::Debug for Convoy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

/// One discrete world state as seen from the AV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub av_lane: Lane,
    pub front_vehicles: Convoy,
    pub oncoming: Option<u8>,
    pub lane_changes_used: u8,
    pub crashed: bool,
    pub overtaken: bool,
}

impl GridState {
    /// Builds a snapshot and evaluates the static crash and overtake predicates.
    pub fn new(
        av_lane: Lane,
        front_vehicles: &[i32],
        oncoming: Option<i32>,
        lane_changes_used: u8,
    ) -> Result<Self, GridError> {
        let front_vehicles = Convoy::from_segments(front_vehicles)?;
        let oncoming = match oncoming {
            Some(ov) if (0..=GRID_MAX).contains(&ov) => Some(ov as u8),
            Some(ov) => {
                return Err(GridError::InvalidState(format!(
                    "oncoming segment {ov} outside 0..={GRID_MAX}"
                )))
            }
            None => None,
        };
        let mut state = GridState {
            av_lane,
            front_vehicles,
            oncoming,
            lane_changes_used,
            crashed: false,
            overtaken: false,
        };
        state.crashed = occupied_in_av_lane(&state);
        state.overtaken = !state.crashed && is_overtaken(&state);
        Ok(state)
    }

    pub fn oncoming_segment(&self) -> Option<i32> {
        self.oncoming.map(i32::from)
    }

    pub fn is_terminal(&self) -> bool {
        self.crashed || self.overtaken
    }
}

impl fmt::Display for GridState {
    /// `lane=L; fv=14,16; ov=24; lcc=0`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lane = match self.av_lane {
            Lane::Left => "L",
            Lane::Right => "R",
        };
        let fv = if self.front_vehicles.is_empty() {
            "-".to_string()
        } else {
            self.front_vehicles
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let ov = match self.oncoming {
            Some(ov) => ov.to_string(),
            None => "-".to_string(),
        };
        write!(
            f,
            "lane={lane}; fv={fv}; ov={ov}; lcc={}",
            self.lane_changes_used
        )
    }
}

impl FromStr for GridState {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let line = s
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or_else(|| GridError::Parse("empty snapshot".into()))?;
        let fields: Vec<&str> = line
            .split(';')
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .collect();
        let expected = ["lane", "fv", "ov", "lcc"];
        if fields.len() != expected.len() {
            return Err(GridError::Parse(format!(
                "expected {} fields, found {}",
                expected.len(),
                fields.len()
            )));
        }
        let mut values = Vec::with_capacity(4);
        for (field, key) in fields.iter().zip(expected) {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| GridError::Parse(format!("field `{field}` lacks `=`")))?;
            if k.trim() != key {
                return Err(GridError::Parse(format!(
                    "expected field `{key}`, found `{}`",
                    k.trim()
                )));
            }
            values.push(v.trim());
        }
        let lane = match values[0] {
            "L" => Lane::Left,
            "R" => Lane::Right,
            other => return Err(GridError::Parse(format!("bad lane `{other}`"))),
        };
        let parse_int = |v: &str| {
            v.parse::<i32>()
                .map_err(|_| GridError::Parse(format!("bad integer `{v}`")))
        };
        let fvs = if values[1] == "-" {
            Vec::new()
        } else {
            values[1]
                .split(',')
                .map(|v| parse_int(v.trim()))
                .collect::<Result<Vec<_>, _>>()?
        };
        let ov = if values[2] == "-" {
            None
        } else {
            Some(parse_int(values[2])?)
        };
        let lcc = values[3]
            .parse::<u8>()
            .map_err(|_| GridError::Parse(format!("bad lane-change count `{}`", values[3])))?;
        GridState::new(lane, &fvs, ov, lcc)
    }
}

fn occupied_in_av_lane(state: &GridState) -> bool {
    match state.av_lane {
        Lane::Left => state.front_vehicles.contains(AV_SEGMENT),
        Lane::Right => state.oncoming_segment() == Some(AV_SEGMENT),
    }
}

/// True if the state records a collision or a vehicle shares the AV's cell and lane.
pub fn is_crash(state: &GridState) -> bool {
    state.crashed || occupied_in_av_lane(state)
}

/// AV in the Right lane with the oncoming vehicle at most one cell away.
pub fn in_danger_zone(state: &GridState) -> bool {
    state.av_lane == Lane::Right
        && state
            .oncoming_segment()
            .is_some_and(|ov| (ov - AV_SEGMENT).abs() <= 1)
}

/// AV back in the Left lane with every tracked vehicle behind it.
pub fn is_overtaken(state: &GridState) -> bool {
    !state.crashed
        && state.av_lane == Lane::Left
        && state.front_vehicles.iter().all(|s| s < AV_SEGMENT)
}

/// Transition rules with a configurable lane-change budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridModel {
    pub max_lane_changes: u8,
}

impl Default for GridModel {
    fn default() -> Self {
        GridModel {
            max_lane_changes: DEFAULT_MAX_LANE_CHANGES,
        }
    }
}

impl GridModel {
    pub fn new(max_lane_changes: u8) -> Self {
        GridModel { max_lane_changes }
    }

    /// Whether `action` may be taken from a non-terminal `state`.
    ///
    /// Brake is disabled when it would push a tracked vehicle ahead past
    /// [`GRID_MAX`]; losing it would make the overtake test vacuous.
    pub fn is_enabled(&self, state: &GridState, action: Action) -> bool {
        let budget_left = state.lane_changes_used < self.max_lane_changes;
        match action {
            Action::LeftLaneChange => state.av_lane == Lane::Right && budget_left,
            Action::RightLaneChange => state.av_lane == Lane::Left && budget_left,
            Action::Brake => state
                .front_vehicles
                .max()
                .is_none_or(|top| top + action.delta().fv_delta <= GRID_MAX),
            Action::Accelerate | Action::Drive => true,
        }
    }

    pub fn apply(&self, state: &GridState, action: Action) -> Result<GridState, GridError> {
        if state.is_terminal() {
            return Err(GridError::TerminalState);
        }
        if !self.is_enabled(state, action) {
            return Err(GridError::ActionDisabled(action));
        }
        Ok(transition(state, action))
    }
}

/// Successor of `state` under `action` with the default lane-change budget.
pub fn apply_action(state: &GridState, action: Action) -> Result<GridState, GridError> {
    GridModel::default().apply(state, action)
}

/// Successor without the enabledness and terminal checks, for tracking what
/// the sensors should report while a plan runs.
pub fn predict(state: &GridState, action: Action) -> GridState {
    transition(state, action)
}

fn transition(state: &GridState, action: Action) -> GridState {
    let delta = action.delta();
    let lane_before = state.av_lane;
    let lane_after = match delta.lane_effect {
        LaneEffect::None => lane_before,
        LaneEffect::ToLeft => Lane::Left,
        LaneEffect::ToRight => Lane::Right,
    };
    // a lane change sweeps through both lanes for the whole action
    let occupies_left = lane_before == Lane::Left || lane_after == Lane::Left;
    let occupies_right = lane_before == Lane::Right || lane_after == Lane::Right;

    let mut crashed = false;
    let mut front_vehicles = Convoy::EMPTY;
    for old in state.front_vehicles.iter() {
        let new = old + delta.fv_delta;
        if occupies_left && old.min(new) <= AV_SEGMENT && AV_SEGMENT <= old.max(new) {
            crashed = true;
        }
        if (0..=GRID_MAX).contains(&new) {
            front_vehicles.push(new);
        }
    }

    let mut oncoming = None;
    if let Some(old) = state.oncoming_segment() {
        let new = old + delta.ov_delta;
        // sub-stepping the approach one cell at a time hits the AV's cell
        if occupies_right && new <= AV_SEGMENT && AV_SEGMENT <= old {
            crashed = true;
        }
        if (0..=GRID_MAX).contains(&new) {
            oncoming = Some(new as u8);
        }
    }

    let mut next = GridState {
        av_lane: lane_after,
        front_vehicles,
        oncoming,
        lane_changes_used: state.lane_changes_used + u8::from(action.is_lane_change()),
        crashed,
        overtaken: false,
    };
    next.crashed = next.crashed || occupied_in_av_lane(&next);
    next.overtaken = !next.crashed && is_overtaken(&next);
    next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Crashed,
    Overtaken,
}

/// State sequence produced by folding a plan over an initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Replay {
    pub states: Vec<GridState>,
    pub terminated_by: Option<Termination>,
}

impl Replay {
    pub fn last(&self) -> &GridState {
        self.states.last().expect("replay always holds the initial state")
    }
}

/// Folds `plan` over `initial`, stopping at the first terminal state.
pub fn replay(model: &GridModel, initial: &GridState, plan: &[Action]) -> Result<Replay, GridError> {
    let mut states = vec![*initial];
    let mut terminated_by = termination(initial);
    if terminated_by.is_some() {
        return Ok(Replay {
            states,
            terminated_by,
        });
    }
    for &action in plan {
        let next = model.apply(states.last().unwrap(), action)?;
        states.push(next);
        terminated_by = termination(&next);
        if terminated_by.is_some() {
            break;
        }
    }
    Ok(Replay {
        states,
        terminated_by,
    })
}

fn termination(state: &GridState) -> Option<Termination> {
    if state.crashed {
        Some(Termination::Crashed)
    } else if state.overtaken {
        Some(Termination::Overtaken)
    } else {
        None
    }
}
