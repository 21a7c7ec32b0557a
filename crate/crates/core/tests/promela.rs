use std::path::{Path, PathBuf};
use std::process::Command;

use overtake_core::grid::{replay, GridModel, GridState, Lane};
use overtake_core::planner::{plan, PlannerMode, SearchLimits};
use overtake_core::promela::{emit_model, has_placeholder, parse_trail};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn check_golden(name: &str, text: &str) {
    let path = golden_dir().join(name);
    if std::env::var_os("OVERTAKE_BLESS").is_some() {
        std::fs::write(&path, text).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(text, expected, "{name} drifted; rerun with OVERTAKE_BLESS=1 after review");
}

#[test]
fn golden_models_are_stable() {
    let limits = SearchLimits::default();
    let canonical = GridState::new(Lane::Left, &[14], Some(24), 0).unwrap();
    let first = emit_model(&canonical, PlannerMode::Final, &limits);
    assert_eq!(first, emit_model(&canonical, PlannerMode::Final, &limits));
    check_golden("final_left_fv14_ov24.pml", &first);

    let boxed = GridState::new(Lane::Right, &[11, 13], Some(14), 0).unwrap();
    check_golden("prep_a_right_fv11_13_ov14.pml", &emit_model(&boxed, PlannerMode::PreparationsA, &limits));

    let no_ov = GridState::new(Lane::Left, &[12, 15], None, 0).unwrap();
    let text = emit_model(&no_ov, PlannerMode::PreparationsB, &limits);
    assert!(!has_placeholder(&text));
    check_golden("prep_b_left_fv12_15.pml", &text);
}

fn spin_available() -> bool {
    Command::new("spin").arg("-V").output().is_ok_and(|o| o.status.success())
}

/// Runs Spin on an emitted model and returns the guided-simulation transcript,
/// or `None` when no counterexample exists.
fn spin_trail(model: &str, dir: &Path) -> Option<String> {
    std::fs::write(dir.join("model.pml"), model).unwrap();
    let run = |program: &str, args: &[&str]| {
        let out = Command::new(program).args(args).current_dir(dir).output().unwrap();
        String::from_utf8_lossy(&out.stdout).into_owned()
    };
    run("spin", &["-a", "model.pml"]);
    run("cc", &["-O2", "-o", "pan", "pan.c"]);
    run("./pan", &["-a", "-m70"]);
    dir.join("model.pml.trail")
        .exists()
        .then(|| run("spin", &["-t", "model.pml"]))
}

#[test]
fn spin_cross_check_when_available() {
    if !spin_available() {
        eprintln!("spin not on PATH; cross-check skipped");
        return;
    }
    let limits = SearchLimits::default();
    let model = GridModel::new(limits.max_lane_changes);
    let dir = std::env::temp_dir().join(format!("overtake-spin-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for lane in [Lane::Left, Lane::Right] {
        for fv in 11..=18 {
            for ov in [None, Some(14), Some(20), Some(26)] {
                let snap = GridState::new(lane, &[fv], ov, 0).unwrap();
                if snap.is_terminal() {
                    continue;
                }
                let _ = std::fs::remove_file(dir.join("model.pml.trail"));
                let native = plan(&snap, PlannerMode::Final, &limits).is_ok();
                let trail = spin_trail(&emit_model(&snap, PlannerMode::Final, &limits), &dir);
                assert_eq!(native, trail.is_some(), "{snap}");
                if let Some(t) = trail {
                    let actions = parse_trail(&t).unwrap();
                    let r = replay(&model, &snap, &actions).unwrap();
                    assert!(r.last().overtaken, "{snap}: {actions:?}");
                }
            }
        }
    }
}
