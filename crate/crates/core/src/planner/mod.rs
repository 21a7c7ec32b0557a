//! Reachability planner over the grid model.
//!
//! [`plan`] searches depth-first in the canonical action order and returns
//! the first path that reaches the mode's goal, the way an explicit-state
//! checker returns the first counterexample to "the goal is never reached".
//! [`oracle_plan_exists`] answers the same question by breadth-first
//! enumeration and is used to cross-check the search.

mod oracle;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{in_danger_zone, Action, GridModel, GridState, Lane, AV_SEGMENT};

pub use oracle::oracle_plan_exists;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PlannerMode {
    /// Complete a collision-free overtake; danger zone enforced.
    Final,
    /// AV stuck in the Right lane: get back into a free left-lane gap; no danger zone.
    PreparationsA,
    /// AV in the Left lane: close up on the vehicle ahead; danger zone enforced.
    PreparationsB,
}

impl PlannerMode {
    pub fn enforces_danger_zone(self) -> bool {
        !matches!(self, PlannerMode::PreparationsA)
    }

    /// Goal predicate; only ever evaluated on states reached by at least one action.
    pub fn is_goal(self, state: &GridState, limits: &SearchLimits) -> bool {
        if state.crashed || state.av_lane != Lane::Left {
            return false;
        }
        match self {
            PlannerMode::Final => state.overtaken,
            PlannerMode::PreparationsA => (AV_SEGMENT - 1..=AV_SEGMENT + 1)
                .all(|cell| !state.front_vehicles.contains(cell)),
            PlannerMode::PreparationsB => state
                .front_vehicles
                .nearest_ahead()
                .is_some_and(|fv| fv - AV_SEGMENT <= limits.gap_target),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerMode::Final => "final",
            PlannerMode::PreparationsA => "prepA",
            PlannerMode::PreparationsB => "prepB",
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlannerMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "final" => Ok(PlannerMode::Final),
            "prepa" | "preparationsa" => Ok(PlannerMode::PreparationsA),
            "prepb" | "preparationsb" => Ok(PlannerMode::PreparationsB),
            other => Err(format!("unknown planner mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchLimits {
    pub depth_bound: u32,
    pub max_states: usize,
    pub max_lane_changes: u8,
    /// Case-B goal: nearest vehicle ahead at most this many segments away.
    pub gap_target: i32,
}

impl Default for SearchLimits {
    fn default() -> Self {
        SearchLimits {
            depth_bound: 64,
            max_states: 1_000_000,
            max_lane_changes: crate::grid::DEFAULT_MAX_LANE_CHANGES,
            gap_target: 2,
        }
    }
}

impl SearchLimits {
    pub fn model(&self) -> GridModel {
        GridModel::new(self.max_lane_changes)
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.depth_bound == 0 {
            return Err(PlanError::InvalidLimits("depth_bound must be at least 1"));
        }
        if self.max_states == 0 {
            return Err(PlanError::InvalidLimits("max_states must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub actions: Vec<Action>,
    pub mode: PlannerMode,
    pub states_expanded: usize,
    pub search_time: Duration,
}

impl Plan {
    pub fn lane_changes(&self) -> usize {
        self.actions.iter().filter(|a| a.is_lane_change()).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoPathReason {
    /// Whole reachable space searched, no goal state.
    Exhausted,
    /// Some branches were cut at the depth bound.
    DepthBound,
    /// Gave up after `max_states` expansions.
    StateBound,
    /// Final mode and the selected preparations mode both failed.
    BothFailed,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PlanError {
    #[error("no path to the goal ({0:?})")]
    NoPath(NoPathReason),
    #[error("snapshot is already terminal (crashed or overtaken)")]
    TerminalSnapshot,
    #[error("preparations mode may only be selected after the final model failed")]
    FinalNotFailed,
    #[error("invalid search limits: {0}")]
    InvalidLimits(&'static str),
}

struct Frame {
    state: GridState,
    arrived_by: Option<Action>,
    next_child: usize,
}

/// Whether `action` would undo the lane change that produced the current state.
///
/// An immediate reversal only burns lane-change budget; the same relative
/// positions are reachable by staying in lane.
pub fn reverses_lane_change(previous: Option<Action>, action: Action) -> bool {
    matches!(
        (previous, action),
        (Some(Action::LeftLaneChange), Action::RightLaneChange)
            | (Some(Action::RightLaneChange), Action::LeftLaneChange)
    )
}

/// Visited-set key: the full grid state plus whether it was entered by a lane change.
pub(crate) type SearchKey = (GridState, bool);

/// Depth-first search for the first goal state in canonical action order.
///
/// Children are pruned when disabled, crashed, inside the danger zone (modes
/// that enforce it), reversing the previous lane change, already visited, or
/// deeper than `limits.depth_bound`.
///
/// Visited states remember the shallowest depth they were entered at and are
/// re-entered only from a strictly shallower depth, which keeps the search
/// complete under the depth bound.
pub fn plan(snapshot: &GridState, mode: PlannerMode, limits: &SearchLimits) -> Result<Plan, PlanError> {
    limits.validate()?;
    if snapshot.is_terminal() {
        return Err(PlanError::TerminalSnapshot);
    }
    let started = Instant::now();
    let model = limits.model();
    let danger = mode.enforces_danger_zone();

    let mut visited: HashMap<SearchKey, u32> = HashMap::new();
    visited.insert((*snapshot, false), 0);
    let mut stack = vec![Frame {
        state: *snapshot,
        arrived_by: None,
        next_child: 0,
    }];
    let mut path: Vec<Action> = Vec::new();
    let mut expanded = 1usize;
    let mut depth_cut = false;

    while !stack.is_empty() {
        let depth = stack.len() as u32;
        let frame = stack.last_mut().expect("stack is non-empty");
        let Some(&action) = Action::CANONICAL_ORDER.get(frame.next_child) else {
            stack.pop();
            path.pop();
            continue;
        };
        frame.next_child += 1;
        if depth > limits.depth_bound {
            depth_cut = true;
            frame.next_child = Action::CANONICAL_ORDER.len();
            continue;
        }
        if !model.is_enabled(&frame.state, action) || reverses_lane_change(frame.arrived_by, action)
        {
            continue;
        }
        let child = model
            .apply(&frame.state, action)
            .expect("frame states are never terminal");
        // crashed paths are abandoned
        if child.crashed || (danger && in_danger_zone(&child)) {
            continue;
        }
        let key = (child, action.is_lane_change());
        match visited.get(&key) {
            Some(&seen) if seen <= depth => continue,
            _ => {
                visited.insert(key, depth);
            }
        }
        expanded += 1;
        if expanded > limits.max_states {
            return Err(PlanError::NoPath(NoPathReason::StateBound));
        }
        path.push(action);
        if mode.is_goal(&child, limits) {
            return Ok(Plan {
                actions: path,
                mode,
                states_expanded: expanded,
                search_time: started.elapsed(),
            });
        }
        if child.is_terminal() {
            path.pop();
            continue;
        }
        stack.push(Frame {
            state: child,
            arrived_by: Some(action),
            next_child: 0,
        });
    }

    Err(PlanError::NoPath(if depth_cut {
        NoPathReason::DepthBound
    } else {
        NoPathReason::Exhausted
    }))
}

/// Case A when the AV is in the Right lane, Case B when it is in the Left lane.
pub fn select_mode(snapshot: &GridState, final_failed: bool) -> Result<PlannerMode, PlanError> {
    if !final_failed {
        return Err(PlanError::FinalNotFailed);
    }
    Ok(match snapshot.av_lane {
        Lane::Right => PlannerMode::PreparationsA,
        Lane::Left => PlannerMode::PreparationsB,
    })
}

/// Final mode first, then the preparations mode chosen by [`select_mode`].
pub fn plan_with_fallback(snapshot: &GridState, limits: &SearchLimits) -> Result<Plan, PlanError> {
    match plan(snapshot, PlannerMode::Final, limits) {
        Err(PlanError::NoPath(_)) => {}
        other => return other,
    }
    let mode = select_mode(snapshot, true)?;
    match plan(snapshot, mode, limits) {
        Err(PlanError::NoPath(_)) => Err(PlanError::NoPath(NoPathReason::BothFailed)),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{replay, Termination};
    use Action::*;

    fn st(lane: Lane, fvs: &[i32], ov: Option<i32>) -> GridState {
        GridState::new(lane, fvs, ov, 0).unwrap()
    }

    #[test]
    fn single_vehicle_without_traffic() {
        let s = st(Lane::Left, &[12], None);
        let limits = SearchLimits::default();
        let p = plan(&s, PlannerMode::Final, &limits).unwrap();
        let r = replay(&limits.model(), &s, &p.actions).unwrap();
        assert_eq!(r.terminated_by, Some(Termination::Overtaken));
        assert_eq!(p.actions, vec![Accelerate, RightLaneChange, Accelerate, Accelerate, LeftLaneChange]);
    }

    #[test]
    fn convoy_overtaken_after_oncoming_passes() {
        // the single oncoming vehicle eventually passes, then the lane is free
        let s = st(Lane::Left, &[11, 12, 13], Some(12));
        let limits = SearchLimits::default();
        let p = plan(&s, PlannerMode::Final, &limits).unwrap();
        assert!(oracle_plan_exists(&s, PlannerMode::Final, &limits));
        let r = replay(&limits.model(), &s, &p.actions).unwrap();
        assert_eq!(r.terminated_by, Some(Termination::Overtaken));
    }

    #[test]
    fn boxed_in_right_lane_has_no_plan() {
        // every action carries the oncoming vehicle through the AV's cell
        let s = st(Lane::Right, &[9, 10, 11], Some(12));
        let limits = SearchLimits::default();
        for mode in [PlannerMode::Final, PlannerMode::PreparationsA] {
            assert_eq!(plan(&s, mode, &limits), Err(PlanError::NoPath(NoPathReason::Exhausted)));
            assert!(!oracle_plan_exists(&s, mode, &limits));
        }
        assert_eq!(
            plan_with_fallback(&s, &limits),
            Err(PlanError::NoPath(NoPathReason::BothFailed))
        );
    }

    #[test]
    fn no_immediate_lane_reversal() {
        assert!(reverses_lane_change(Some(LeftLaneChange), RightLaneChange));
        assert!(reverses_lane_change(Some(RightLaneChange), LeftLaneChange));
        assert!(!reverses_lane_change(Some(Drive), RightLaneChange));
        assert!(!reverses_lane_change(None, LeftLaneChange));
    }

    #[test]
    fn terminal_snapshot_is_rejected() {
        let crashed = st(Lane::Left, &[10], None);
        assert!(crashed.crashed);
        assert_eq!(
            plan(&crashed, PlannerMode::Final, &SearchLimits::default()),
            Err(PlanError::TerminalSnapshot)
        );
    }

    #[test]
    fn invalid_limits() {
        let s = st(Lane::Left, &[12], None);
        let limits = SearchLimits {
            depth_bound: 0,
            ..SearchLimits::default()
        };
        assert!(matches!(plan(&s, PlannerMode::Final, &limits), Err(PlanError::InvalidLimits(_))));
    }

    #[test]
    fn case_a_returns_to_left_lane_gap() {
        let s = st(Lane::Right, &[11, 13], Some(14));
        let limits = SearchLimits::default();
        let p = plan(&s, PlannerMode::PreparationsA, &limits).unwrap();
        let r = replay(&limits.model(), &s, &p.actions).unwrap();
        let last = r.last();
        assert_eq!(last.av_lane, Lane::Left);
        assert!(!last.crashed);
        assert!(PlannerMode::PreparationsA.is_goal(last, &limits));
    }

    #[test]
    fn select_mode_by_lane() {
        assert_eq!(
            select_mode(&st(Lane::Right, &[12], Some(14)), true),
            Ok(PlannerMode::PreparationsA)
        );
        assert_eq!(
            select_mode(&st(Lane::Left, &[12], Some(14)), true),
            Ok(PlannerMode::PreparationsB)
        );
        assert_eq!(
            select_mode(&st(Lane::Left, &[12], Some(14)), false),
            Err(PlanError::FinalNotFailed)
        );
    }

    #[test]
    fn fallback_uses_final_when_possible() {
        let s = st(Lane::Left, &[12], None);
        let p = plan_with_fallback(&s, &SearchLimits::default()).unwrap();
        assert_eq!(p.mode, PlannerMode::Final);
    }

    #[test]
    fn fallback_case_b_closes_gap() {
        // oncoming traffic too close to overtake three vehicles
        let s = st(Lane::Left, &[14, 15, 16], Some(13));
        let limits = SearchLimits::default();
        let p = plan_with_fallback(&s, &limits).unwrap();
        if p.mode == PlannerMode::PreparationsB {
            let r = replay(&limits.model(), &s, &p.actions).unwrap();
            assert!(PlannerMode::PreparationsB.is_goal(r.last(), &limits));
        }
    }

    #[test]
    fn plan_is_deterministic() {
        let s = st(Lane::Left, &[12, 14], Some(26));
        let limits = SearchLimits::default();
        let a = plan(&s, PlannerMode::Final, &limits).unwrap();
        let b = plan(&s, PlannerMode::Final, &limits).unwrap();
        assert_eq!(a.actions, b.actions);
        assert_eq!(a.states_expanded, b.states_expanded);
    }

    #[test]
    fn state_bound_reported() {
        let s = st(Lane::Left, &[11, 12, 13], Some(20));
        let limits = SearchLimits {
            max_states: 3,
            ..SearchLimits::default()
        };
        assert_eq!(
            plan(&s, PlannerMode::Final, &limits),
            Err(PlanError::NoPath(NoPathReason::StateBound))
        );
    }
}
