//! Executes queued grid actions as fixed-length windows of continuous motion.

use std::collections::VecDeque;

use crate::grid::{Action, Lane};
use crate::world::{
    detect_collision, step, AvMode, Collision, ContinuousWorld, Kinematics, WorldError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveAction {
    pub action: Action,
    pub ticks_left: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Controller {
    queue: VecDeque<Action>,
    active: Option<ActiveAction>,
}

impl Controller {
    pub fn new() -> Self {
        Controller::default()
    }

    /// Replaces the pending queue; an action in progress keeps running.
    pub fn load(&mut self, actions: &[Action]) {
        self.queue = actions.iter().copied().collect();
    }

    pub fn pending(&self) -> &VecDeque<Action> {
        &self.queue
    }

    pub fn active(&self) -> Option<ActiveAction> {
        self.active
    }

    /// Between windows.
    pub fn is_idle(&self) -> bool {
        self.active.is_none()
    }

    pub fn begin_next(&mut self, world: &mut ContinuousWorld, kin: &Kinematics) -> Option<Action> {
        debug_assert!(self.is_idle());
        let action = self.queue.pop_front()?;
        world.av_mode = AvMode::for_action(action);
        self.active = Some(ActiveAction {
            action,
            ticks_left: kin.window_ticks(action).max(1),
        });
        Some(action)
    }

    /// One simulation step; returns the action whose window just closed.
    pub fn tick(
        &mut self,
        world: &mut ContinuousWorld,
        kin: &Kinematics,
    ) -> Result<Option<Action>, WorldError> {
        step(world, kin.dt, kin)?;
        let Some(active) = self.active.as_mut() else {
            return Ok(None);
        };
        active.ticks_left -= 1;
        if active.ticks_left > 0 {
            return Ok(None);
        }
        let action = active.action;
        self.active = None;
        finish(world, action);
        Ok(Some(action))
    }
}

fn finish(world: &mut ContinuousWorld, action: Action) {
    match action {
        Action::LeftLaneChange => {
            world.lateral = 0.0;
            world.av.lane = Lane::Left;
        }
        Action::RightLaneChange => {
            world.lateral = 1.0;
            world.av.lane = Lane::Right;
        }
        _ => {}
    }
    world.av_mode = AvMode::Drive;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionReport {
    pub completed: Vec<Action>,
    pub collision: Option<Collision>,
}

/// Runs `actions` to completion on a world without traffic generation,
/// calling `on_tick` after every step. Stops at the first collision.
pub fn execute_plan<F>(
    world: &mut ContinuousWorld,
    actions: &[Action],
    kin: &Kinematics,
    mut on_tick: F,
) -> Result<ExecutionReport, WorldError>
where
    F: FnMut(&ContinuousWorld),
{
    let mut controller = Controller::new();
    controller.load(actions);
    let mut completed = Vec::with_capacity(actions.len());
    while controller.begin_next(world, kin).is_some() {
        loop {
            let done = controller.tick(world, kin)?;
            on_tick(world);
            if let Some(collision) = detect_collision(world) {
                return Ok(ExecutionReport {
                    completed,
                    collision: Some(collision),
                });
            }
            if let Some(action) = done {
                completed.push(action);
                break;
            }
        }
    }
    Ok(ExecutionReport {
        completed,
        collision: None,
    })
}
