//! Deterministic world simulation and scenario runner.

pub mod log;
pub mod metrics;
pub mod plot;
pub mod runner;
pub mod scenario;
pub mod world;

pub use log::{PlanDiag, RunLog, TickRecord};
pub use metrics::{compute_metrics, Metrics};
pub use runner::{never_lethal, run, write_outputs, RunOutput, SimError};
pub use scenario::Scenario;
pub use world::{step_humans, step_robot, ScriptedHuman};
