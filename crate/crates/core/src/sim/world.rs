//! Scripted ground truth: people walking their waypoints, robot kinematics.

use crate::geometry::{Point2, Pose2D};
use crate::human::HumanState;
use crate::planner::{self, Twist};

use super::scenario::HumanScript;

/// A scripted person and their progress along the waypoint list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScriptedHuman {
    pub waypoints: Vec<Point2>,
    pub speed: f64,
    pub start_time: f64,
    pub pos: Point2,
    /// Index of the waypoint being walked to.
    pub next: usize,
    /// Velocity over the last step.
    pub vel: Point2,
}

impl ScriptedHuman {
    pub fn new(script: &HumanScript) -> Self {
        let pos = script.waypoints.first().copied().unwrap_or_default();
        Self {
            waypoints: script.waypoints.clone(),
            speed: script.speed,
            start_time: script.start_time,
            pos,
            next: 1,
            vel: Point2::default(),
        }
    }

    pub fn state(&self) -> HumanState {
        HumanState::new(self.pos.x, self.pos.y, self.vel.x, self.vel.y)
    }

    pub fn finished(&self) -> bool {
        self.next >= self.waypoints.len()
    }

    /// Walks toward the next waypoint; stops on it when reached mid-step.
    pub fn step(&mut self, t: f64, dt: f64) {
        let before = self.pos;
        if t + 1e-9 >= self.start_time && !self.finished() {
            let target = self.waypoints[self.next];
            let d = self.pos.distance(&target);
            let reach = self.speed * dt;
            if d <= reach {
                self.pos = target;
                self.next += 1;
            } else {
                let f = reach / d;
                self.pos = Point2::new(
                    self.pos.x + (target.x - self.pos.x) * f,
                    self.pos.y + (target.y - self.pos.y) * f,
                );
            }
        }
        self.vel = if dt > 0.0 {
            Point2::new((self.pos.x - before.x) / dt, (self.pos.y - before.y) / dt)
        } else {
            Point2::default()
        };
    }
}

/// Advances every person by one tick starting at time `t`.
pub fn step_humans(humans: &mut [ScriptedHuman], t: f64, dt: f64) {
    for h in humans {
        h.step(t, dt);
    }
}

pub fn step_robot(pose: &Pose2D, u: Twist, dt: f64) -> Pose2D {
    planner::step(pose, u, dt)
}
