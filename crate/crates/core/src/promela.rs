//! Promela model emission and Spin trail parsing.
//!
//! [`emit_model`] instantiates [`TEMPLATE`] for one snapshot. The emitted
//! model follows the grid transition rules exactly, tries the five actions
//! in canonical order and prints `ACTION:<Name>` on every taken branch, so a
//! guided simulation of a Spin counterexample for `!<>p` can be turned back
//! into an action list with [`parse_trail`].

use std::fmt::Write as _;

use thiserror::Error;

use crate::grid::{Action, GridState, Lane, GRID_MAX};
use crate::planner::{PlannerMode, SearchLimits};

pub const MARKER: &str = "ACTION:";

/// Model skeleton. `{NAME}` placeholders are filled by [`emit_model`].
pub const TEMPLATE: &str = r#"/* overtaking model, mode {MODE} */
#define GRID_MAX {GRID_MAX}
#define AV_POS 10
#define LEFT 0
#define RIGHT 1
#define MAX_LANE_CHANGES {MAX_LANE_CHANGES}
#define GAP_TARGET {GAP_TARGET}

#define A_NONE 0
#define A_LLC 1
#define A_RLC 2

bit av_lane = {AV_LANE};
byte lcc = 0;
byte last = A_NONE;
bool crashed = false;
bool overtaken = false;
bool goal = false;
bool dead = false;
bit occ_left;
bit occ_right;
short nv;
{FV_DECLS}{OV_POSITION}
#define p (goal == true)
#define running (!crashed && !overtaken && !goal && !dead)
{FV_INLINE}{OV_INLINE}
inline advance(dfv, dov, lane_after) {
    occ_left = (av_lane == LEFT || lane_after == LEFT);
    occ_right = (av_lane == RIGHT || lane_after == RIGHT);
{FV_SHIFT}{OV_SHIFT}    av_lane = lane_after;
    /* crash check before the goal check */
{CRASH_CHECK}{OVERTAKEN_CHECK}{GOAL}{DANGER_GUARD}}

init {
{FV_POSITIONS}    do
    :: atomic { running && av_lane == RIGHT && lcc < MAX_LANE_CHANGES && last != A_RLC ->
        printf("ACTION:LeftLaneChange\n");
        advance(0, -2, LEFT);
        lcc++;
        last = A_LLC }
    :: atomic { running ->
        printf("ACTION:Accelerate\n");
        advance(-1, -3, av_lane);
        last = A_NONE }
    :: atomic { running && av_lane == LEFT && lcc < MAX_LANE_CHANGES && last != A_LLC ->
        printf("ACTION:RightLaneChange\n");
        advance(0, -2, RIGHT);
        lcc++;
        last = A_RLC }
    :: atomic { running ->
        printf("ACTION:Drive\n");
        advance(0, -2, av_lane);
        last = A_NONE }
    :: atomic { running{BRAKE_GUARD} ->
        printf("ACTION:Brake\n");
        advance(1, -3, av_lane);
        last = A_NONE }
    od
}

ltl { !<>p }
"#;

/// Fills [`TEMPLATE`] for `snapshot`.
pub fn emit_model(snapshot: &GridState, mode: PlannerMode, limits: &SearchLimits) -> String {
    let fvs = snapshot.front_vehicles.to_vec();
    let n = fvs.len();
    let mut out = TEMPLATE.to_string();
    let mut fill = |key: &str, value: String| {
        out = out.replace(&format!("{{{key}}}"), &value);
    };

    fill("MODE", mode.as_str().to_string());
    fill("GRID_MAX", GRID_MAX.to_string());
    fill("MAX_LANE_CHANGES", limits.max_lane_changes.to_string());
    fill("GAP_TARGET", limits.gap_target.to_string());
    fill(
        "AV_LANE",
        match snapshot.av_lane {
            Lane::Left => "LEFT",
            Lane::Right => "RIGHT",
        }
        .to_string(),
    );

    if n == 0 {
        fill("FV_DECLS", String::new());
        fill("FV_INLINE", String::new());
        fill("FV_SHIFT", String::new());
        fill("FV_POSITIONS", String::new());
        fill("BRAKE_GUARD", String::new());
    } else {
        fill("FV_DECLS", format!("#define NFV {n}\nshort fv[NFV];\nbool fv_live[NFV];\n"));
        fill("FV_INLINE", FV_INLINE.to_string());
        fill("FV_SHIFT", (0..n).map(|i| format!("    shift_fv({i}, dfv);\n")).collect());
        let mut init = String::new();
        for (i, s) in fvs.iter().enumerate() {
            let _ = writeln!(init, "    fv[{i}] = {s}; fv_live[{i}] = true;");
        }
        fill("FV_POSITIONS", init);
        fill(
            "BRAKE_GUARD",
            (0..n)
                .map(|i| format!(" && (!fv_live[{i}] || fv[{i}] + 1 <= GRID_MAX)"))
                .collect(),
        );
    }

    match snapshot.oncoming_segment() {
        Some(ov) => {
            fill("OV_POSITION", format!("short ov = {ov};\nbool ov_live = true;\n"));
            fill("OV_INLINE", OV_INLINE.to_string());
            fill("OV_SHIFT", "    shift_ov(dov);\n".to_string());
        }
        None => {
            fill("OV_POSITION", String::new());
            fill("OV_INLINE", String::new());
            fill("OV_SHIFT", String::new());
        }
    }

    let has_ov = snapshot.oncoming.is_some();
    let mut crash = String::new();
    for i in 0..n {
        let _ = writeln!(
            crash,
            "    if\n    :: av_lane == LEFT && fv_live[{i}] && fv[{i}] == AV_POS -> crashed = true\n    :: else -> skip\n    fi;"
        );
    }
    if has_ov {
        crash.push_str(
            "    if\n    :: av_lane == RIGHT && ov_live && ov == AV_POS -> crashed = true\n    :: else -> skip\n    fi;\n",
        );
    }
    fill("CRASH_CHECK", crash);

    let all_behind: String = (0..n)
        .map(|i| format!(" && (!fv_live[{i}] || fv[{i}] < AV_POS)"))
        .collect();
    fill(
        "OVERTAKEN_CHECK",
        format!("    overtaken = (!crashed && av_lane == LEFT{all_behind});\n"),
    );

    let goal = match mode {
        PlannerMode::Final => "    goal = overtaken;\n".to_string(),
        PlannerMode::PreparationsA => {
            let free: String = (0..n)
                .map(|i| {
                    format!(" && !(fv_live[{i}] && fv[{i}] >= AV_POS - 1 && fv[{i}] <= AV_POS + 1)")
                })
                .collect();
            format!("    goal = (!crashed && av_lane == LEFT{free});\n")
        }
        PlannerMode::PreparationsB => {
            let mut g = String::from("    nv = GRID_MAX + 1;\n");
            for i in 0..n {
                let _ = writeln!(
                    g,
                    "    if\n    :: fv_live[{i}] && fv[{i}] > AV_POS && fv[{i}] < nv -> nv = fv[{i}]\n    :: else -> skip\n    fi;"
                );
            }
            g.push_str(
                "    goal = (!crashed && av_lane == LEFT && nv <= GRID_MAX && nv - AV_POS <= GAP_TARGET);\n",
            );
            g
        }
    };
    fill("GOAL", goal);

    let danger = if mode.enforces_danger_zone() && has_ov {
        "    /* danger zone: no Right-lane position next to OV */\n    if\n    :: av_lane == RIGHT && ov_live && ov >= AV_POS - 1 && ov <= AV_POS + 1 -> dead = true\n    :: else -> skip\n    fi\n"
            .to_string()
    } else {
        "    skip\n".to_string()
    };
    fill("DANGER_GUARD", danger);
    out
}

const FV_INLINE: &str = r#"
inline shift_fv(i, d) {
    if
    :: fv_live[i] ->
        nv = fv[i] + d;
        if
        :: occ_left && ((fv[i] <= AV_POS && AV_POS <= nv) || (nv <= AV_POS && AV_POS <= fv[i])) -> crashed = true
        :: else -> skip
        fi;
        fv[i] = nv;
        fv_live[i] = (nv >= 0 && nv <= GRID_MAX)
    :: else -> skip
    fi
}
"#;

const OV_INLINE: &str = r#"
inline shift_ov(d) {
    if
    :: ov_live ->
        nv = ov + d;
        if
        :: occ_right && nv <= AV_POS && AV_POS <= ov -> crashed = true
        :: else -> skip
        fi;
        ov = nv;
        ov_live = (nv >= 0 && nv <= GRID_MAX)
    :: else -> skip
    fi
}
"#;

/// True if `text` still holds an unfilled `{NAME}` placeholder.
pub fn has_placeholder(text: &str) -> bool {
    text.match_indices('{').any(|(i, _)| {
        let rest = &text[i + 1..];
        let name: String = rest.chars().take_while(|c| c.is_ascii_uppercase() || *c == '_').collect();
        !name.is_empty() && rest[name.len()..].starts_with('}')
    })
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrailError {
    #[error("line {line}: unknown action in marker `{text}`")]
    MalformedMarker { line: usize, text: String },
}

/// Extracts the marked actions from a guided-simulation transcript.
pub fn parse_trail(transcript: &str) -> Result<Vec<Action>, TrailError> {
    let mut actions = Vec::new();
    for (idx, raw) in transcript.lines().enumerate() {
        let line = raw.trim();
        let Some(name) = line.strip_prefix(MARKER) else {
            continue;
        };
        let action = name.trim().parse::<Action>().map_err(|_| TrailError::MalformedMarker {
            line: idx + 1,
            text: line.to_string(),
        })?;
        actions.push(action);
    }
    Ok(actions)
}
