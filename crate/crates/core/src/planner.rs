//! Dynamic window local planner for a differential-drive robot.
//!
//! Each planning cycle samples `(v, w)` pairs from the velocities reachable
//! within one command period, rolls each pair forward at constant twist,
//! measures how far the robot travels along the arc before its footprint
//! touches a lethal cell, and keeps only pairs from which it could still
//! brake in time. The survivors are scored by goal alignment at the end of
//! the rollout, clearance and forward speed; the best one is commanded.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::{Costmap, GridSpec, LETHAL};
use crate::geometry::{normalize_angle, Point2, Pose2D};

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("invalid planner parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub v: f64,
    pub w: f64,
}

impl Twist {
    pub const ZERO: Twist = Twist { v: 0.0, w: 0.0 };

    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

/// Velocity and acceleration envelope. The accelerations double as the
/// braking decelerations of the admissibility test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotLimits {
    pub v_min: f64,
    pub v_max: f64,
    pub w_min: f64,
    pub w_max: f64,
    pub accel_v: f64,
    pub accel_w: f64,
    pub radius: f64,
}

impl Default for RobotLimits {
    fn default() -> Self {
        Self {
            v_min: 0.0,
            v_max: 0.5,
            w_min: -1.0,
            w_max: 1.0,
            accel_v: 0.5,
            accel_w: 1.5,
            radius: 0.25,
        }
    }
}

impl RobotLimits {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let fin = [self.v_min, self.v_max, self.w_min, self.w_max];
        if fin.iter().any(|v| !v.is_finite()) {
            return Err(PlannerError::InvalidParam("velocity bounds must be finite"));
        }
        if self.v_min > self.v_max || self.w_min > self.w_max {
            return Err(PlannerError::InvalidParam("velocity bounds are inverted"));
        }
        if !(self.accel_v > 0.0) || !(self.accel_w > 0.0) {
            return Err(PlannerError::InvalidParam("accelerations must be positive"));
        }
        if !(self.radius >= 0.0 && self.radius.is_finite()) {
            return Err(PlannerError::InvalidParam("radius must be >= 0"));
        }
        Ok(())
    }

    pub fn contains(&self, u: Twist) -> bool {
        u.v >= self.v_min && u.v <= self.v_max && u.w >= self.w_min && u.w <= self.w_max
    }

    fn speed_scale(&self) -> f64 {
        self.v_min.abs().max(self.v_max.abs())
    }
}

/// Scenario key `planner`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Weight of goal alignment.
    pub alpha: f64,
    /// Weight of clearance.
    pub beta: f64,
    /// Weight of forward speed.
    pub gamma: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Command period the dynamic window is computed over.
    pub dt_cmd: f64,
    pub v_samples: usize,
    pub w_samples: usize,
    /// Clearance reported when no obstacle lies on the arc.
    pub clear_dist_cap: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            alpha: 0.8,
            beta: 0.1,
            gamma: 0.1,
            horizon: 2.0,
            dt: 0.1,
            dt_cmd: 0.25,
            v_samples: 11,
            w_samples: 21,
            clear_dist_cap: 10.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if [self.alpha, self.beta, self.gamma].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(PlannerError::InvalidParam("weights must be finite and >= 0"));
        }
        if !(self.dt > 0.0 && self.horizon > self.dt && self.horizon.is_finite()) {
            return Err(PlannerError::InvalidParam("need horizon > dt > 0"));
        }
        if !(self.dt_cmd > 0.0 && self.dt_cmd.is_finite()) {
            return Err(PlannerError::InvalidParam("dt_cmd must be positive"));
        }
        if self.v_samples < 2 || self.w_samples < 2 {
            return Err(PlannerError::InvalidParam("need at least 2 samples per axis"));
        }
        if !(self.clear_dist_cap > 0.0 && self.clear_dist_cap.is_finite()) {
            return Err(PlannerError::InvalidParam("clear_dist_cap must be positive"));
        }
        Ok(())
    }
}

/// One step of the discrete unicycle model.
pub fn step(pose: &Pose2D, u: Twist, dt: f64) -> Pose2D {
    let (s, c) = pose.theta.sin_cos();
    Pose2D::new(
        pose.x + u.v * dt * c,
        pose.y + u.v * dt * s,
        pose.theta + u.w * dt,
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Start pose followed by one pose per step.
    pub poses: Vec<Pose2D>,
    pub dt: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Pose2D {
        self.poses.last().expect("trajectory holds at least the start pose")
    }

    pub fn length(&self) -> f64 {
        self.poses
            .windows(2)
            .map(|w| w[0].position().distance(&w[1].position()))
            .sum()
    }
}

/// Constant-twist rollout over `ceil(horizon / dt)` steps.
pub fn rollout(start: Pose2D, u: Twist, horizon: f64, dt: f64) -> Trajectory {
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut poses = Vec::with_capacity(steps + 1);
    poses.push(start);
    let mut p = start;
    for _ in 0..steps {
        p = step(&p, u, dt);
        poses.push(p);
    }
    Trajectory { poses, dt }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityWindow {
    pub v: (f64, f64),
    pub w: (f64, f64),
}

impl VelocityWindow {
    pub fn contains(&self, u: Twist) -> bool {
        u.v >= self.v.0 && u.v <= self.v.1 && u.w >= self.w.0 && u.w <= self.w.1
    }

    /// Point of the window closest to standing still.
    pub fn brake(&self) -> Twist {
        Twist::new(0.0f64.clamp(self.v.0, self.v.1), 0.0f64.clamp(self.w.0, self.w.1))
    }
}

fn interval(current: f64, reach: f64, min: f64, max: f64) -> (f64, f64) {
    let lo = (current - reach).max(min);
    let hi = (current + reach).min(max);
    if lo <= hi {
        (lo, hi)
    } else {
        // current is outside the static bounds: closest bound
        let b = current.clamp(min, max);
        (b, b)
    }
}

/// Velocities reachable within `dt_cmd`, intersected with the static bounds.
pub fn dynamic_window(current: Twist, limits: &RobotLimits, dt_cmd: f64) -> VelocityWindow {
    VelocityWindow {
        v: interval(current.v, limits.accel_v * dt_cmd, limits.v_min, limits.v_max),
        w: interval(current.w, limits.accel_w * dt_cmd, limits.w_min, limits.w_max),
    }
}

/// Cells from which the robot footprint (a disk of `radius` around the cell
/// center) would overlap a lethal cell center. Outside the grid is blocked.
#[derive(Debug, Clone)]
pub struct CollisionGrid {
    spec: GridSpec,
    blocked: Vec<bool>,
}

impl CollisionGrid {
    pub fn new(map: &Costmap, radius: f64) -> Self {
        let spec = *map.spec();
        let mut blocked = vec![false; spec.len()];
        let r_cells = (radius / spec.resolution).floor() as isize;
        let mut stamp = Vec::new();
        for dy in -r_cells..=r_cells {
            for dx in -r_cells..=r_cells {
                let d = ((dx * dx + dy * dy) as f64).sqrt() * spec.resolution;
                if d <= radius + 1e-12 {
                    stamp.push((dx, dy));
                }
            }
        }
        let (w, h) = (spec.width as isize, spec.height as isize);
        for iy in 0..h {
            for ix in 0..w {
                if map.get(ix as usize, iy as usize) != LETHAL {
                    continue;
                }
                for &(dx, dy) in &stamp {
                    let (jx, jy) = (ix + dx, iy + dy);
                    if jx >= 0 && jy >= 0 && jx < w && jy < h {
                        blocked[(jy * w + jx) as usize] = true;
                    }
                }
            }
        }
        Self { spec, blocked }
    }

    pub fn is_blocked(&self, p: Point2) -> bool {
        match self.spec.cell_of(p) {
            Some((ix, iy)) => self.blocked[self.spec.index(ix, iy)],
            None => true,
        }
    }

    pub fn resolution(&self) -> f64 {
        self.spec.resolution
    }

    /// Arc length travelled along `traj` before the footprint first touches
    /// a lethal cell, or `cap` if it never does.
    pub fn clearance(&self, traj: &Trajectory, cap: f64) -> f64 {
        let first = traj.poses[0].position();
        if self.is_blocked(first) {
            return 0.0;
        }
        let max_step = self.spec.resolution / 2.0;
        let mut travelled = 0.0;
        for w in traj.poses.windows(2) {
            let (a, b) = (w[0].position(), w[1].position());
            let seg = a.distance(&b);
            let n = (seg / max_step).ceil().max(1.0) as usize;
            for k in 1..=n {
                let f = k as f64 / n as f64;
                let p = Point2::new(a.x + (b.x - a.x) * f, a.y + (b.y - a.y) * f);
                if self.is_blocked(p) {
                    return (travelled + seg * f).min(cap);
                }
            }
            travelled += seg;
            if travelled >= cap {
                return cap;
            }
        }
        cap
    }
}

/// Distance along `traj` to the first lethal contact; `cap` if none.
pub fn clearance(traj: &Trajectory, master: &Costmap, robot_radius: f64, cap: f64) -> f64 {
    CollisionGrid::new(master, robot_radius).clearance(traj, cap)
}

/// Whether the robot can brake to a stop within `clear` meters.
pub fn admissible(u: Twist, clear: f64, limits: &RobotLimits) -> bool {
    let clear = clear.max(0.0);
    u.v.abs() <= (2.0 * clear * limits.accel_v).sqrt() && u.w.abs() <= (2.0 * clear * limits.accel_w).sqrt()
}

/// Normalized objective terms, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreTerms {
    /// (180 - misalignment in degrees) / 180.
    pub heading: f64,
    pub dist: f64,
    pub velocity: f64,
}

/// Angle in degrees, in [0, 180], between the pose's heading and the
/// direction from the pose to the goal.
pub fn goal_misalignment(pose: &Pose2D, goal: Point2) -> f64 {
    let dx = goal.x - pose.x;
    let dy = goal.y - pose.y;
    if dx == 0.0 && dy == 0.0 {
        return 0.0;
    }
    normalize_angle(dy.atan2(dx) - pose.theta).abs().to_degrees()
}

pub fn score_terms(u: Twist, traj: &Trajectory, clear: f64, goal: Point2, params: &PlannerParams, limits: &RobotLimits) -> ScoreTerms {
    let theta_g = goal_misalignment(traj.last(), goal);
    let scale = limits.speed_scale();
    ScoreTerms {
        heading: (180.0 - theta_g) / 180.0,
        dist: (clear / params.clear_dist_cap).clamp(0.0, 1.0),
        velocity: if scale > 0.0 { (u.v.abs() / scale).min(1.0) } else { 0.0 },
    }
}

/// Weighted objective `alpha * heading + beta * dist + gamma * velocity`.
pub fn score(u: Twist, traj: &Trajectory, clear: f64, goal: Point2, params: &PlannerParams, limits: &RobotLimits) -> f64 {
    let t = score_terms(u, traj, clear, goal, params, limits);
    params.alpha * t.heading + params.beta * t.dist + params.gamma * t.velocity
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub twist: Twist,
    pub clearance: f64,
    pub admissible: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub twist: Twist,
    pub window: VelocityWindow,
    pub candidates: usize,
    pub admissible: usize,
    /// Objective of the chosen twist; `None` on recovery.
    pub best_score: Option<f64>,
    pub clearance: f64,
    pub recovery: bool,
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        let f = i as f64 / (n - 1) as f64;
        lo * (1.0 - f) + hi * f
    })
}

fn tie_tolerance(params: &PlannerParams) -> f64 {
    1e-9 * (params.alpha + params.beta + params.gamma).max(f64::MIN_POSITIVE)
}

/// Lexicographic preference: higher score, then smaller |w|, then smaller
/// change of v. Earlier candidates win exact ties.
fn better(a: &Candidate, b: &Candidate, current: Twist, tol: f64) -> bool {
    if a.score > b.score + tol {
        return true;
    }
    if a.score < b.score - tol {
        return false;
    }
    let (wa, wb) = (a.twist.w.abs(), b.twist.w.abs());
    if wa < wb - 1e-12 {
        return true;
    }
    if wa > wb + 1e-12 {
        return false;
    }
    (a.twist.v - current.v).abs() < (b.twist.v - current.v).abs() - 1e-12
}

/// Samples the dynamic window, evaluates every pair and returns them in
/// sampling order. The current twist and the braking corner of the window
/// are appended to the grid.
pub fn evaluate(
    robot: &Pose2D,
    current: Twist,
    grid: &CollisionGrid,
    goal: Point2,
    params: &PlannerParams,
    limits: &RobotLimits,
) -> (VelocityWindow, Vec<Candidate>) {
    let window = dynamic_window(current, limits, params.dt_cmd);
    let mut twists: Vec<Twist> = Vec::with_capacity(params.v_samples * params.w_samples + 2);
    for v in linspace(window.v.0, window.v.1, params.v_samples) {
        for w in linspace(window.w.0, window.w.1, params.w_samples) {
            twists.push(Twist::new(v, w));
        }
    }
    let held = Twist::new(
        current.v.clamp(window.v.0, window.v.1),
        current.w.clamp(window.w.0, window.w.1),
    );
    twists.push(held);
    twists.push(window.brake());

    let candidates = twists
        .into_iter()
        .map(|twist| {
            let traj = rollout(*robot, twist, params.horizon, params.dt);
            let clear = grid.clearance(&traj, params.clear_dist_cap);
            Candidate {
                twist,
                clearance: clear,
                admissible: admissible(twist, clear, limits),
                score: score(twist, &traj, clear, goal, params, limits),
            }
        })
        .collect();
    (window, candidates)
}

/// Full planning step with diagnostics.
pub fn plan_detailed(
    robot: &Pose2D,
    current: Twist,
    master: &Costmap,
    goal: Point2,
    params: &PlannerParams,
    limits: &RobotLimits,
) -> PlanOutcome {
    let grid = CollisionGrid::new(master, limits.radius);
    plan_with_grid(robot, current, &grid, goal, params, limits)
}

pub fn plan_with_grid(
    robot: &Pose2D,
    current: Twist,
    grid: &CollisionGrid,
    goal: Point2,
    params: &PlannerParams,
    limits: &RobotLimits,
) -> PlanOutcome {
    let (window, candidates) = evaluate(robot, current, grid, goal, params, limits);
    let tol = tie_tolerance(params);
    let best = candidates
        .iter()
        .filter(|c| c.admissible)
        .fold(None::<&Candidate>, |best, c| match best {
            Some(b) if !better(c, b, current, tol) => Some(b),
            _ => Some(c),
        });
    let admissible_count = candidates.iter().filter(|c| c.admissible).count();
    if let Some(b) = best {
        return PlanOutcome {
            twist: b.twist,
            window,
            candidates: candidates.len(),
            admissible: admissible_count,
            best_score: Some(b.score),
            clearance: b.clearance,
            recovery: false,
        };
    }

    // Nothing admissible: brake as hard as the window allows and turn
    // toward the goal if some turn rate is safe at that speed.
    let brake = window.brake();
    let mut choice: Option<(Twist, f64, f64)> = None;
    for w in linspace(window.w.0, window.w.1, params.w_samples).chain(std::iter::once(brake.w)) {
        let u = Twist::new(brake.v, w);
        let traj = rollout(*robot, u, params.horizon, params.dt);
        let clear = grid.clearance(&traj, params.clear_dist_cap);
        if !admissible(u, clear, limits) {
            continue;
        }
        let misalign = goal_misalignment(traj.last(), goal);
        if choice.is_none_or(|(_, m, _)| misalign < m - 1e-12) {
            choice = Some((u, misalign, clear));
        }
    }
    let (twist, clear) = match choice {
        Some((u, _, c)) => (u, c),
        None => {
            let traj = rollout(*robot, brake, params.horizon, params.dt);
            (brake, grid.clearance(&traj, params.clear_dist_cap))
        }
    };
    PlanOutcome {
        twist,
        window,
        candidates: candidates.len(),
        admissible: admissible_count,
        best_score: None,
        clearance: clear,
        recovery: true,
    }
}

/// Velocity command maximizing the objective over the admissible part of
/// the dynamic window.
pub fn plan(
    robot: &Pose2D,
    current: Twist,
    master: &Costmap,
    goal: Point2,
    params: &PlannerParams,
    limits: &RobotLimits,
) -> Twist {
    plan_detailed(robot, current, master, goal, params, limits).twist
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn open_map() -> Costmap {
        Costmap::new(GridSpec::new(Point2::new(-5.0, -5.0), 0.05, 200, 200).unwrap())
    }

    fn wall_map(x: f64) -> Costmap {
        let mut m = open_map();
        let spec = *m.spec();
        for iy in 0..spec.height {
            for ix in 0..spec.width {
                let c = spec.center(ix, iy);
                if c.x >= x && c.x < x + 0.1 {
                    m.set(ix, iy, LETHAL);
                }
            }
        }
        m
    }

    #[test]
    fn step_examples() {
        let p = step(&Pose2D::default(), Twist::new(1.0, 0.0), 0.1);
        assert_abs_diff_eq!(p.x, 0.1, epsilon = 1e-15);
        assert_eq!((p.y, p.theta), (0.0, 0.0));
        let p = step(&Pose2D::default(), Twist::new(0.0, FRAC_PI_2), 1.0);
        assert_eq!((p.x, p.y), (0.0, 0.0));
        assert_abs_diff_eq!(p.theta, FRAC_PI_2, epsilon = 1e-15);
    }

    #[test]
    fn rollout_arc_against_exact_solution() {
        let (v, w) = (1.0, FRAC_PI_2);
        let traj = rollout(Pose2D::default(), Twist::new(v, w), 1.0, 0.01);
        assert_eq!(traj.poses.len(), 101);
        let end = traj.last();
        assert_abs_diff_eq!(end.theta, FRAC_PI_2, epsilon = 1e-9);
        assert_abs_diff_eq!(traj.length(), 1.0, epsilon = 0.01);
        let exact = Point2::new(v / w * w.sin(), v / w * (1.0 - w.cos()));
        assert!(end.position().distance(&exact) < 0.01 * traj.length());
    }

    #[test]
    fn dynamic_window_examples() {
        let limits = RobotLimits {
            v_min: 0.0,
            v_max: 1.0,
            accel_v: 0.2,
            ..RobotLimits::default()
        };
        let w = dynamic_window(Twist::new(0.5, 0.0), &limits, 0.25);
        assert_abs_diff_eq!(w.v.0, 0.45, epsilon = 1e-12);
        assert_abs_diff_eq!(w.v.1, 0.55, epsilon = 1e-12);
        let w = dynamic_window(Twist::ZERO, &limits, 0.25);
        assert_eq!(w.v.0, 0.0);
        let huge = RobotLimits {
            accel_v: 1e12,
            accel_w: 1e12,
            ..limits
        };
        let w = dynamic_window(Twist::new(0.3, 0.2), &huge, 0.25);
        assert_eq!(w.v, (limits.v_min, limits.v_max));
        assert_eq!(w.w, (limits.w_min, limits.w_max));
    }

    #[test]
    fn clearance_open_map_is_cap() {
        let traj = rollout(Pose2D::default(), Twist::new(0.5, 0.0), 2.0, 0.1);
        assert_eq!(clearance(&traj, &open_map(), 0.25, 10.0), 10.0);
    }

    #[test]
    fn clearance_wall_ahead() {
        let traj = rollout(Pose2D::default(), Twist::new(1.0, 0.0), 2.0, 0.1);
        let c = clearance(&traj, &wall_map(1.0), 0.25, 10.0);
        assert!((c - 0.75).abs() <= 0.05, "clearance {c}");
    }

    #[test]
    fn clearance_starting_in_collision() {
        let traj = rollout(Pose2D::new(1.0, 0.0, 0.0), Twist::new(0.5, 0.0), 2.0, 0.1);
        assert_eq!(clearance(&traj, &wall_map(1.0), 0.25, 10.0), 0.0);
        // leaving the grid counts as contact
        let traj = rollout(Pose2D::new(4.9, 0.0, 0.0), Twist::new(0.5, 0.0), 2.0, 0.1);
        assert!(clearance(&traj, &open_map(), 0.0, 10.0) < 0.2);
    }

    #[test]
    fn admissible_examples() {
        let limits = RobotLimits {
            accel_v: 1.0,
            accel_w: 1.0,
            ..RobotLimits::default()
        };
        assert!(admissible(Twist::new(1.0, 0.0), 0.5, &limits));
        assert!(!admissible(Twist::new(1.0001, 0.0), 0.5, &limits));
        assert!(admissible(Twist::new(-1.0, 0.0), 0.5, &limits));
        assert!(admissible(Twist::ZERO, 0.0, &limits));
        assert!(!admissible(Twist::new(0.01, 0.0), 0.0, &limits));
        assert!(!admissible(Twist::new(0.0, 0.01), 0.0, &limits));
        assert!(admissible(Twist::new(0.5, 1.0), 10.0, &limits));
    }

    #[test]
    fn heading_term_bounds() {
        let p = PlannerParams::default();
        let l = RobotLimits::default();
        let facing = rollout(Pose2D::default(), Twist::ZERO, 1.0, 0.1);
        let t = score_terms(Twist::ZERO, &facing, 10.0, Point2::new(5.0, 0.0), &p, &l);
        assert_eq!(t.heading, 1.0);
        let away = rollout(Pose2D::new(0.0, 0.0, PI), Twist::ZERO, 1.0, 0.1);
        let t = score_terms(Twist::ZERO, &away, 10.0, Point2::new(5.0, 0.0), &p, &l);
        assert_abs_diff_eq!(t.heading, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn heading_only_picks_min_misalignment() {
        let params = PlannerParams {
            beta: 0.0,
            gamma: 0.0,
            ..PlannerParams::default()
        };
        let limits = RobotLimits::default();
        let robot = Pose2D::new(0.0, 0.0, 0.3);
        let goal = Point2::new(3.0, -2.0);
        let grid = CollisionGrid::new(&open_map(), limits.radius);
        let (_, cands) = evaluate(&robot, Twist::ZERO, &grid, goal, &params, &limits);
        let out = plan_with_grid(&robot, Twist::ZERO, &grid, goal, &params, &limits);
        let best = cands
            .iter()
            .map(|c| goal_misalignment(rollout(robot, c.twist, params.horizon, params.dt).last(), goal))
            .fold(f64::INFINITY, f64::min);
        let chosen = goal_misalignment(rollout(robot, out.twist, params.horizon, params.dt).last(), goal);
        assert_abs_diff_eq!(chosen, best, epsilon = 1e-6);
    }

    #[test]
    fn open_map_goal_ahead_drives_straight() {
        let out = plan_detailed(
            &Pose2D::default(),
            Twist::ZERO,
            &open_map(),
            Point2::new(3.0, 0.0),
            &PlannerParams::default(),
            &RobotLimits::default(),
        );
        assert!(out.twist.v > 0.0);
        assert!(out.twist.w.abs() < 1e-9);
        assert!(!out.recovery);
    }

    #[test]
    fn goal_behind_rotates() {
        let u = plan(
            &Pose2D::default(),
            Twist::ZERO,
            &open_map(),
            Point2::new(-3.0, 0.0),
            &PlannerParams::default(),
            &RobotLimits::default(),
        );
        assert!(u.w.abs() > 0.0);
    }

    #[test]
    fn goal_left_turns_left() {
        let u = plan(
            &Pose2D::default(),
            Twist::ZERO,
            &open_map(),
            Point2::new(0.0, 3.0),
            &PlannerParams::default(),
            &RobotLimits::default(),
        );
        assert!(u.w > 0.0);
    }

    #[test]
    fn wall_ahead_choice_is_admissible() {
        let limits = RobotLimits::default();
        let params = PlannerParams::default();
        let map = wall_map(0.45);
        let robot = Pose2D::default();
        let out = plan_detailed(&robot, Twist::new(0.3, 0.0), &map, Point2::new(3.0, 0.0), &params, &limits);
        let traj = rollout(robot, out.twist, params.horizon, params.dt);
        let c = clearance(&traj, &map, limits.radius, params.clear_dist_cap);
        assert!(admissible(out.twist, c, &limits));
        assert!(dynamic_window(Twist::new(0.3, 0.0), &limits, params.dt_cmd).contains(out.twist));
    }

    #[test]
    fn stuck_robot_recovers_inside_window() {
        let limits = RobotLimits::default();
        let params = PlannerParams::default();
        let map = wall_map(0.0);
        let current = Twist::new(0.4, 0.0);
        let out = plan_detailed(&Pose2D::default(), current, &map, Point2::new(3.0, 0.0), &params, &limits);
        assert!(out.recovery);
        let w = dynamic_window(current, &limits, params.dt_cmd);
        assert!(w.contains(out.twist));
        assert_eq!(out.twist.v, w.v.0);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = PlannerParams {
            horizon: 0.05,
            ..PlannerParams::default()
        };
        assert!(p.validate().is_err());
        let l = RobotLimits {
            v_min: 1.0,
            v_max: 0.0,
            ..RobotLimits::default()
        };
        assert!(l.validate().is_err());
        assert!(PlannerParams::default().validate().is_ok());
        assert!(RobotLimits::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn straight_rollout_is_collinear(x in -2.0f64..2.0, y in -2.0f64..2.0, th in -3.0f64..3.0, v in -1.0f64..1.0) {
            let start = Pose2D::new(x, y, th);
            let traj = rollout(start, Twist::new(v, 0.0), 1.0, 0.1);
            for p in &traj.poses {
                prop_assert_eq!(p.theta, start.theta);
                let cross = (p.x - x) * th.sin() - (p.y - y) * th.cos();
                prop_assert!(cross.abs() < 1e-12);
            }
        }

        #[test]
        fn weight_scaling_keeps_choice(scale in 0.01f64..100.0, th in -3.0f64..3.0, gx in -4.0f64..4.0, gy in -4.0f64..4.0, v0 in 0.0f64..0.5) {
            let limits = RobotLimits::default();
            let base = PlannerParams::default();
            let scaled = PlannerParams { alpha: base.alpha * scale, beta: base.beta * scale, gamma: base.gamma * scale, ..base };
            let map = wall_map(1.5);
            let robot = Pose2D::new(0.0, 0.0, th);
            let goal = Point2::new(gx, gy);
            let a = plan(&robot, Twist::new(v0, 0.0), &map, goal, &base, &limits);
            let b = plan(&robot, Twist::new(v0, 0.0), &map, goal, &scaled, &limits);
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn more_speed_weight_never_slows_down() {
        let limits = RobotLimits::default();
        let map = open_map();
        for (th, gx, gy) in [(0.0, 3.0, 0.0), (0.5, 2.0, -1.0), (-1.0, -2.0, 2.0), (2.5, 1.0, 1.0)] {
            let robot = Pose2D::new(0.0, 0.0, th);
            let mut last = 0.0;
            for k in 0..40 {
                let params = PlannerParams { gamma: 0.05 * k as f64, ..PlannerParams::default() };
                let u = plan(&robot, Twist::new(0.2, 0.0), &map, Point2::new(gx, gy), &params, &limits);
                assert!(u.v.abs() >= last - 1e-12, "gamma {} v {} < {}", params.gamma, u.v, last);
                last = u.v.abs();
            }
        }
    }

    #[test]
    fn planning_is_deterministic() {
        let map = wall_map(1.0);
        let run = || plan_detailed(&Pose2D::new(0.1, 0.2, 0.3), Twist::new(0.2, 0.1), &map, Point2::new(3.0, 1.0), &PlannerParams::default(), &RobotLimits::default());
        assert_eq!(run(), run());
    }
}
