//! Per-tick run records and their long-format CSV encoding.
//!
//! Every tick writes one `robot` row followed by one `track` row per live
//! track and one `human` row per scripted person. A single `goal` row
//! opens the file.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fusion::TrackedHuman;
use crate::geometry::{Point2, Pose2D};
use crate::human::HumanState;
use crate::planner::Twist;

#[derive(Debug, Error)]
pub enum LogError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("log has no goal row")]
    MissingGoal,
}

/// Planner diagnostics of a planning tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanDiag {
    pub candidates: usize,
    pub admissible: usize,
    pub best_score: Option<f64>,
    pub clearance: f64,
    pub recovery: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub pose: Pose2D,
    pub twist: Twist,
    /// Distance from the robot center to the nearest person.
    pub min_clearance: Option<f64>,
    /// Ground-truth social cost at the robot position.
    pub social_cost: u8,
    /// Master costmap cost at the robot cell as the planner saw it.
    pub master_cost: u8,
    pub plan: Option<PlanDiag>,
    pub tracks: Vec<TrackedHuman>,
    pub humans: Vec<HumanState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub goal: Point2,
    pub goal_tolerance: f64,
    pub ticks: Vec<TickRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Record {
    Goal,
    Robot,
    Track,
    Human,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Row {
    t: f64,
    record: Option<Record>,
    id: Option<u64>,
    x: Option<f64>,
    y: Option<f64>,
    theta: Option<f64>,
    v: Option<f64>,
    w: Option<f64>,
    vx: Option<f64>,
    vy: Option<f64>,
    cov_trace: Option<f64>,
    tolerance: Option<f64>,
    min_clearance: Option<f64>,
    social_cost: Option<u8>,
    master_cost: Option<u8>,
    candidates: Option<usize>,
    admissible: Option<usize>,
    best_score: Option<f64>,
    plan_clearance: Option<f64>,
    recovery: Option<u8>,
}

impl RunLog {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), LogError> {
        let mut out = csv::Writer::from_writer(w);
        out.serialize(Row {
            t: 0.0,
            record: Some(Record::Goal),
            x: Some(self.goal.x),
            y: Some(self.goal.y),
            tolerance: Some(self.goal_tolerance),
            ..Row::default()
        })?;
        for tick in &self.ticks {
            let plan = tick.plan;
            out.serialize(Row {
                t: tick.t,
                record: Some(Record::Robot),
                x: Some(tick.pose.x),
                y: Some(tick.pose.y),
                theta: Some(tick.pose.theta),
                v: Some(tick.twist.v),
                w: Some(tick.twist.w),
                min_clearance: tick.min_clearance,
                social_cost: Some(tick.social_cost),
                master_cost: Some(tick.master_cost),
                candidates: plan.map(|p| p.candidates),
                admissible: plan.map(|p| p.admissible),
                best_score: plan.and_then(|p| p.best_score),
                plan_clearance: plan.map(|p| p.clearance),
                recovery: plan.map(|p| p.recovery as u8),
                ..Row::default()
            })?;
            for tr in &tick.tracks {
                out.serialize(Row {
                    t: tick.t,
                    record: Some(Record::Track),
                    id: Some(tr.id),
                    x: Some(tr.state.x),
                    y: Some(tr.state.y),
                    vx: Some(tr.state.vx),
                    vy: Some(tr.state.vy),
                    cov_trace: Some(tr.cov_trace),
                    ..Row::default()
                })?;
            }
            for (i, h) in tick.humans.iter().enumerate() {
                out.serialize(Row {
                    t: tick.t,
                    record: Some(Record::Human),
                    id: Some(i as u64),
                    x: Some(h.x),
                    y: Some(h.y),
                    vx: Some(h.vx),
                    vy: Some(h.vy),
                    ..Row::default()
                })?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, LogError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut goal = None;
        let mut ticks: Vec<TickRecord> = Vec::new();
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row?;
            let line = i + 2;
            let bad = |message: &str| LogError::Malformed {
                line,
                message: message.to_string(),
            };
            let xy = || Ok::<_, LogError>((row.x.ok_or_else(|| bad("missing x"))?, row.y.ok_or_else(|| bad("missing y"))?));
            match row.record.ok_or_else(|| bad("missing record kind"))? {
                Record::Goal => {
                    let (x, y) = xy()?;
                    goal = Some((Point2::new(x, y), row.tolerance.ok_or_else(|| bad("missing tolerance"))?));
                }
                Record::Robot => {
                    let (x, y) = xy()?;
                    let plan = match (row.candidates, row.admissible, row.plan_clearance) {
                        (Some(candidates), Some(admissible), Some(clearance)) => Some(PlanDiag {
                            candidates,
                            admissible,
                            best_score: row.best_score,
                            clearance,
                            recovery: row.recovery.unwrap_or(0) != 0,
                        }),
                        _ => None,
                    };
                    ticks.push(TickRecord {
                        t: row.t,
                        pose: Pose2D {
                            x,
                            y,
                            theta: row.theta.ok_or_else(|| bad("missing theta"))?,
                        },
                        twist: Twist::new(row.v.unwrap_or(0.0), row.w.unwrap_or(0.0)),
                        min_clearance: row.min_clearance,
                        social_cost: row.social_cost.unwrap_or(0),
                        master_cost: row.master_cost.unwrap_or(0),
                        plan,
                        tracks: Vec::new(),
                        humans: Vec::new(),
                    });
                }
                kind @ (Record::Track | Record::Human) => {
                    let (x, y) = xy()?;
                    let tick = ticks.last_mut().ok_or_else(|| bad("row before the first robot row"))?;
                    let state = HumanState::new(x, y, row.vx.unwrap_or(0.0), row.vy.unwrap_or(0.0));
                    if kind == Record::Track {
                        tick.tracks.push(TrackedHuman {
                            id: row.id.ok_or_else(|| bad("missing track id"))?,
                            state,
                            cov_trace: row.cov_trace.unwrap_or(0.0),
                        });
                    } else {
                        tick.humans.push(state);
                    }
                }
            }
        }
        let (goal, goal_tolerance) = goal.ok_or(LogError::MissingGoal)?;
        Ok(Self {
            goal,
            goal_tolerance,
            ticks,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, LogError> {
        let f = std::fs::File::open(path).map_err(csv::Error::from)?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}
