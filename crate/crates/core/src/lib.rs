//! Socially aware navigation for a differential-drive robot.
//!
//! People are detected by a LiDAR and an RGB-D camera, fused by an
//! asynchronous Kalman tracker, and drawn into a layered costmap as lethal
//! bodies surrounded by personal-space costs. A dynamic window planner picks
//! velocity commands on the merged map. [`sim`] runs the whole loop in a
//! deterministic world driven by scenario files.

// `!(x > 0.0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costmap;
pub mod fusion;
pub mod geometry;
pub mod human;
pub mod planner;
pub mod sensing;
pub mod sim;
