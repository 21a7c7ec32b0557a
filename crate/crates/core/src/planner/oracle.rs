use std::collections::{HashSet, VecDeque};

use crate::grid::{in_danger_zone, Action, GridState};

use super::{reverses_lane_change, PlannerMode, SearchKey, SearchLimits};

/// Exhaustive breadth-first check: is any goal state reachable within `limits.depth_bound`?
///
/// Shares the transition rules and pruning with the planner but none of its
/// search machinery; BFS reaches every state at its minimum depth.
pub fn oracle_plan_exists(snapshot: &GridState, mode: PlannerMode, limits: &SearchLimits) -> bool {
    if snapshot.is_terminal() {
        return false;
    }
    let model = limits.model();
    let mut seen: HashSet<SearchKey> = HashSet::from([(*snapshot, false)]);
    let mut frontier = VecDeque::from([(*snapshot, None, 0u32)]);
    while let Some((state, arrived_by, depth)) = frontier.pop_front() {
        if depth == limits.depth_bound {
            continue;
        }
        for action in Action::CANONICAL_ORDER {
            if reverses_lane_change(arrived_by, action) {
                continue;
            }
            let Ok(next) = model.apply(&state, action) else {
                continue;
            };
            if next.crashed {
                continue;
            }
            if mode.enforces_danger_zone() && in_danger_zone(&next) {
                continue;
            }
            if mode.is_goal(&next, limits) {
                return true;
            }
            if !next.is_terminal() && seen.insert((next, action.is_lane_change())) {
                frontier.push_back((next, Some(action), depth + 1));
            }
        }
    }
    false
}
