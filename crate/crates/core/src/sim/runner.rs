//! Fixed-step simulation loop wiring sensors, fusion, costmaps and planner.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::costmap::{self, Costmap, CostmapError, LETHAL};
use crate::fusion::{FusionError, Tracker};
use crate::geometry::Pose2D;
use crate::human::{social_cost_at, HumanState};
use crate::planner::{plan_with_grid, CollisionGrid, Twist};
use crate::sensing::{camera_pipeline, simulate_camera, simulate_lidar};

use super::log::{LogError, PlanDiag, RunLog, TickRecord};
use super::metrics::{compute_metrics, Metrics, MetricsError};
use super::plot;
use super::scenario::{Scenario, ScenarioError};
use super::world::{step_humans, step_robot, ScriptedHuman};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("fusion: {0}")]
    Fusion(#[from] FusionError),
    #[error("costmap: {0}")]
    Costmap(#[from] CostmapError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("log: {0}")]
    Log(#[from] LogError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: RunLog,
    pub metrics: Metrics,
    pub static_layer: Costmap,
    /// Master costmap of the last planning tick.
    pub master: Costmap,
}

/// Counts firings of a periodic event on the simulation clock.
struct Schedule {
    hz: f64,
    fired: u64,
}

impl Schedule {
    fn new(hz: f64) -> Self {
        Self { hz, fired: 0 }
    }

    /// Number of firings due by time `t`.
    fn due(&mut self, t: f64) -> u64 {
        let mut n = 0;
        while self.fired as f64 / self.hz <= t + 1e-9 {
            self.fired += 1;
            n += 1;
        }
        n
    }
}

pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let inputs = scenario.resolve()?;
    let spec = inputs.spec;
    let limits = scenario.robot.limits;
    let static_layer = costmap::rasterize_static(
        &inputs.occupancy,
        limits.radius,
        &spec,
        &scenario.map.inflation,
    )?;

    let rates = scenario.rates;
    let dt = 1.0 / rates.sim_hz;
    let last_tick = (scenario.duration * rates.sim_hz - 1e-9).ceil() as u64;
    let mut lidar_rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut camera_rng = ChaCha8Rng::seed_from_u64(scenario.seed ^ 1);
    let (mut lidar_clock, mut camera_clock, mut plan_clock) = (
        Schedule::new(rates.lidar_hz),
        Schedule::new(rates.camera_hz),
        Schedule::new(rates.plan_hz),
    );

    let sensors = &scenario.sensors;
    let social = &scenario.social;
    let goal = scenario.robot.goal;
    let s = scenario.robot.start;
    let mut robot = Pose2D::new(s.x, s.y, s.theta);
    let mut twist = Twist::ZERO;
    let mut humans: Vec<ScriptedHuman> = scenario.humans.iter().map(ScriptedHuman::new).collect();
    let mut tracker = Tracker::new(scenario.fusion.clone());
    let mut master = static_layer.clone();
    let mut ticks = Vec::with_capacity(last_tick as usize + 1);
    let mut prev_t = f64::NEG_INFINITY;

    for k in 0..=last_tick {
        let t = k as f64 * dt;
        let truth: Vec<HumanState> = humans.iter().map(ScriptedHuman::state).collect();

        let mut batch = Vec::new();
        for _ in 0..lidar_clock.due(t) {
            if sensors.lidar_enabled {
                batch.extend(simulate_lidar(
                    t,
                    &truth,
                    &robot,
                    &sensors.lidar,
                    1.0 / rates.lidar_hz,
                    &mut lidar_rng,
                ));
            }
        }
        match &inputs.replay {
            Some(replay) => {
                for (ft, k) in replay.frames_between(prev_t, t) {
                    if let Some(m) = camera_pipeline(*ft, k, inputs.extrinsics, sensors.min_confidence, &sensors.camera) {
                        batch.push(m.to_world(&robot));
                    }
                }
            }
            None => {
                for _ in 0..camera_clock.due(t) {
                    if sensors.camera_enabled {
                        batch.extend(simulate_camera(
                            t,
                            &truth,
                            &robot,
                            &sensors.camera,
                            inputs.extrinsics,
                            &mut camera_rng,
                        ));
                    }
                }
            }
        }
        tracker.ingest_all(&mut batch)?;

        let mut plan = None;
        if plan_clock.due(t) > 0 {
            tracker.prune(t);
            master = if social.enabled {
                let people: Vec<HumanState> = tracker.confirmed(t).iter().map(|h| h.state).collect();
                let layer = costmap::rasterize_social(&people, social, &spec);
                costmap::merge(&[&static_layer, &layer])?
            } else {
                static_layer.clone()
            };
            let grid = CollisionGrid::new(&master, limits.radius);
            let out = plan_with_grid(&robot, twist, &grid, goal, &scenario.planner, &limits);
            twist = out.twist;
            plan = Some(PlanDiag {
                candidates: out.candidates,
                admissible: out.admissible,
                best_score: out.best_score,
                clearance: out.clearance,
                recovery: out.recovery,
            });
        }

        let pos = robot.position();
        ticks.push(TickRecord {
            t,
            pose: robot,
            twist,
            min_clearance: truth
                .iter()
                .map(|h| h.position().distance(&pos))
                .min_by(f64::total_cmp),
            social_cost: social_cost_at(&truth, pos, social),
            master_cost: master.query(pos).cost_or_lethal(),
            plan,
            tracks: tracker.snapshot(t),
            humans: truth,
        });

        if pos.distance(&goal) <= scenario.robot.goal_tolerance {
            break;
        }
        robot = step_robot(&robot, twist, dt);
        step_humans(&mut humans, t, dt);
        prev_t = t;
    }

    let log = RunLog {
        goal,
        goal_tolerance: scenario.robot.goal_tolerance,
        ticks,
    };
    let metrics = compute_metrics(&log)?;
    Ok(RunOutput {
        log,
        metrics,
        static_layer,
        master,
    })
}

/// True when no logged robot position fell on a lethal master cell.
pub fn never_lethal(log: &RunLog) -> bool {
    log.ticks.iter().all(|r| r.master_cost < LETHAL)
}

/// Writes run.csv, metrics.json, costmap snapshots and the trajectory plot.
pub fn write_outputs(dir: &Path, scenario: &Scenario, out: &RunOutput) -> Result<(), SimError> {
    std::fs::create_dir_all(dir)?;
    let csv = std::io::BufWriter::new(std::fs::File::create(dir.join("run.csv"))?);
    out.log.write_csv(csv)?;
    let mut json = serde_json::to_string_pretty(&out.metrics)?;
    json.push('\n');
    std::fs::write(dir.join("metrics.json"), json)?;
    out.static_layer
        .write_pgm(std::io::BufWriter::new(std::fs::File::create(dir.join("static_costmap.pgm"))?))?;
    out.master
        .write_pgm(std::io::BufWriter::new(std::fs::File::create(dir.join("master_costmap.pgm"))?))?;
    std::fs::write(dir.join("trajectory.svg"), plot::trajectory_svg(scenario, out))?;
    Ok(())
}
