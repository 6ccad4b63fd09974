//! Summary statistics of a run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::log::RunLog;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("run log has no ticks")]
    EmptyLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub goal_reached: bool,
    /// Seconds from the first tick to the first tick inside the goal
    /// tolerance.
    pub time_to_goal: Option<f64>,
    pub path_length: f64,
    /// Smallest robot-to-person center distance over the run.
    pub min_human_clearance: Option<f64>,
    /// Ground-truth social cost at the robot position integrated over time.
    pub personal_space_integral: f64,
    /// Mean squared distance from each person to the nearest track, over
    /// ticks where at least one track exists.
    pub track_mse: Option<f64>,
    pub ticks: usize,
    pub duration: f64,
}

pub fn compute_metrics(log: &RunLog) -> Result<Metrics, MetricsError> {
    let ticks = &log.ticks;
    let first = ticks.first().ok_or(MetricsError::EmptyLog)?;
    let last = ticks.last().expect("non-empty");
    let span = last.t - first.t;
    let period = if ticks.len() > 1 {
        span / (ticks.len() - 1) as f64
    } else {
        0.0
    };

    let arrival = ticks
        .iter()
        .find(|r| r.pose.position().distance(&log.goal) <= log.goal_tolerance);

    let path_length = ticks
        .windows(2)
        .map(|w| w[0].pose.position().distance(&w[1].pose.position()))
        .sum();

    let min_human_clearance = ticks
        .iter()
        .filter_map(|r| r.min_clearance)
        .min_by(f64::total_cmp);

    let personal_space_integral = ticks.iter().map(|r| r.social_cost as f64).sum::<f64>() * period;

    let mut sq_sum = 0.0;
    let mut n = 0usize;
    for r in ticks.iter().filter(|r| !r.tracks.is_empty()) {
        for h in &r.humans {
            let best = r
                .tracks
                .iter()
                .map(|tr| {
                    let (dx, dy) = (tr.state.x - h.x, tr.state.y - h.y);
                    dx * dx + dy * dy
                })
                .fold(f64::INFINITY, f64::min);
            sq_sum += best;
            n += 1;
        }
    }

    Ok(Metrics {
        goal_reached: arrival.is_some(),
        time_to_goal: arrival.map(|r| r.t - first.t),
        path_length,
        min_human_clearance,
        personal_space_integral,
        track_mse: (n > 0).then(|| sq_sum / n as f64),
        ticks: ticks.len(),
        duration: span,
    })
}
