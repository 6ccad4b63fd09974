//! Person detectors.
//!
//! The LiDAR detector is simulated at detection level: it reports every
//! person with isotropic Gaussian position noise and, like a leg tracker
//! fooled by reflections, occasionally reports people who are not there.
//! The camera path turns body keypoints into a ground position: the most
//! stable joint pair with enough confidence is averaged and projected onto
//! the LiDAR plane. Synthetic keypoints are generated for people inside the
//! camera's field of view, with noise growing with range.

use std::io::BufRead;
use std::path::Path;

use nalgebra::Matrix2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{camera_to_lidar, Extrinsics, Point2, Point3, Pose2D};
use crate::human::HumanState;

#[derive(Debug, Error)]
pub enum SensingError {
    #[error("invalid sensor model: {0}")]
    InvalidModel(&'static str),
    #[error("keypoint replay line {line}: {source}")]
    Replay {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("keypoint replay line {line}: {reason}")]
    BadRecord { line: usize, reason: &'static str },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Lidar,
    Camera,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub pos: Point2,
    pub source: Source,
    pub noise_cov: Matrix2<f64>,
}

impl Measurement {
    /// Re-expresses a robot-frame measurement in the world frame.
    pub fn to_world(&self, robot: &Pose2D) -> Measurement {
        let (s, c) = robot.theta.sin_cos();
        let rot = Matrix2::new(c, -s, s, c);
        Measurement {
            t: self.t,
            pos: robot.transform_to_world(self.pos),
            source: self.source,
            noise_cov: rot * self.noise_cov * rot.transpose(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Joint {
    Hip,
    Knee,
    Ankle,
}

impl Joint {
    /// Joints in decreasing order of stability.
    pub const PRIORITY: [Joint; 3] = [Joint::Hip, Joint::Knee, Joint::Ankle];

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub pos: Point3,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointPair {
    pub left: Option<Keypoint>,
    pub right: Option<Keypoint>,
}

/// Camera-frame keypoints of one person, indexed by [`Joint`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KeypointSet {
    pub joints: [JointPair; 3],
}

impl KeypointSet {
    pub fn with(mut self, joint: Joint, side: Side, kp: Keypoint) -> Self {
        self.set(joint, side, kp);
        self
    }

    pub fn set(&mut self, joint: Joint, side: Side, kp: Keypoint) {
        let pair = &mut self.joints[joint.index()];
        match side {
            Side::Left => pair.left = Some(kp),
            Side::Right => pair.right = Some(kp),
        }
    }

    pub fn pair(&self, joint: Joint) -> &JointPair {
        &self.joints[joint.index()]
    }
}

pub fn joint_position(left: Point3, right: Point3) -> Point3 {
    Point3::new(
        (left.x + right.x) / 2.0,
        (left.y + right.y) / 2.0,
        (left.z + right.z) / 2.0,
    )
}

fn usable(kp: &Option<Keypoint>, min_confidence: f64) -> Option<Point3> {
    kp.filter(|k| k.confidence > min_confidence && k.pos.is_finite() && k.pos.z > 0.0)
        .map(|k| k.pos)
}

/// Midpoint of the most stable joint whose left and right keypoints both
/// exceed `min_confidence`, or `None` when no joint qualifies.
pub fn select_joint(k: &KeypointSet, min_confidence: f64) -> Option<(Joint, Point3)> {
    Joint::PRIORITY.iter().find_map(|&j| {
        let pair = k.pair(j);
        let l = usable(&pair.left, min_confidence)?;
        let r = usable(&pair.right, min_confidence)?;
        Some((j, joint_position(l, r)))
    })
}

/// Keypoints to a LiDAR-frame position measurement.
pub fn camera_pipeline(
    t: f64,
    k: &KeypointSet,
    e: Extrinsics,
    min_confidence: f64,
    model: &CameraNoiseModel,
) -> Option<Measurement> {
    let (_, j) = select_joint(k, min_confidence)?;
    let range = j.x.hypot(j.z);
    let std = model.std_at(range);
    Some(Measurement {
        t,
        pos: camera_to_lidar(j, e),
        source: Source::Camera,
        noise_cov: Matrix2::identity() * (std * std),
    })
}

/// Axis-aligned region in the robot frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Region {
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }
}

/// Scenario key `sensors.lidar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarNoiseModel {
    pub pos_std: f64,
    /// Mean number of phantom detections per second.
    pub false_positive_rate: f64,
    pub false_positive_box: Region,
}

impl Default for LidarNoiseModel {
    fn default() -> Self {
        Self {
            pos_std: 0.05,
            false_positive_rate: 0.1,
            false_positive_box: Region {
                x_min: -4.0,
                x_max: 4.0,
                y_min: -4.0,
                y_max: 4.0,
            },
        }
    }
}

impl LidarNoiseModel {
    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.pos_std > 0.0 && self.pos_std.is_finite()) {
            return Err(SensingError::InvalidModel("lidar pos_std must be positive"));
        }
        if !(self.false_positive_rate >= 0.0 && self.false_positive_rate.is_finite()) {
            return Err(SensingError::InvalidModel("lidar false_positive_rate must be >= 0"));
        }
        let b = &self.false_positive_box;
        if !(b.x_min <= b.x_max && b.y_min <= b.y_max) {
            return Err(SensingError::InvalidModel("lidar false_positive_box is empty"));
        }
        Ok(())
    }
}

/// Scenario key `sensors.camera`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraNoiseModel {
    pub std_at_1m: f64,
    /// Growth of the position std per meter of range beyond one meter.
    pub std_slope: f64,
    /// Full horizontal field of view, radians.
    pub fov: f64,
    pub max_range: f64,
}

impl Default for CameraNoiseModel {
    fn default() -> Self {
        Self {
            std_at_1m: 0.02,
            std_slope: 0.03,
            fov: 87f64.to_radians(),
            max_range: 5.0,
        }
    }
}

impl CameraNoiseModel {
    pub fn validate(&self) -> Result<(), SensingError> {
        if !(self.std_at_1m > 0.0 && self.std_at_1m.is_finite()) {
            return Err(SensingError::InvalidModel("camera std_at_1m must be positive"));
        }
        if !(self.std_slope >= 0.0 && self.std_slope.is_finite()) {
            return Err(SensingError::InvalidModel("camera std_slope must be >= 0"));
        }
        if !(self.fov > 0.0 && self.fov <= std::f64::consts::TAU) {
            return Err(SensingError::InvalidModel("camera fov must be in (0, 2pi]"));
        }
        if !(self.max_range > 0.0) {
            return Err(SensingError::InvalidModel("camera max_range must be positive"));
        }
        Ok(())
    }

    /// Position std at `range`; affine beyond one meter, flat below it.
    pub fn std_at(&self, range: f64) -> f64 {
        self.std_at_1m + self.std_slope * (range - 1.0).max(0.0)
    }

    /// Whether a camera-frame point is inside the viewing wedge.
    pub fn sees(&self, c: Point3) -> bool {
        if c.z <= 0.0 {
            return false;
        }
        let range = c.x.hypot(c.z);
        range <= self.max_range && c.x.atan2(c.z).abs() <= self.fov / 2.0
    }
}

fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).map(|n| n.sample(rng)).unwrap_or(0.0)
}

/// One LiDAR scan covering `period` seconds of phantom-detection exposure.
/// Measurements are returned in the world frame, real people first.
pub fn simulate_lidar(
    t: f64,
    humans: &[HumanState],
    robot: &Pose2D,
    model: &LidarNoiseModel,
    period: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Measurement> {
    let cov = Matrix2::identity() * (model.pos_std * model.pos_std);
    let mut out = Vec::with_capacity(humans.len() + 1);
    for h in humans {
        out.push(Measurement {
            t,
            pos: Point2::new(
                h.x + gaussian(rng, model.pos_std),
                h.y + gaussian(rng, model.pos_std),
            ),
            source: Source::Lidar,
            noise_cov: cov,
        });
    }
    let lambda = model.false_positive_rate * period;
    if lambda > 0.0 {
        let count = Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(0.0) as usize;
        let b = &model.false_positive_box;
        for _ in 0..count {
            let local = Point2::new(
                rng.random_range(b.x_min..=b.x_max),
                rng.random_range(b.y_min..=b.y_max),
            );
            out.push(Measurement {
                t,
                pos: robot.transform_to_world(local),
                source: Source::Lidar,
                noise_cov: cov,
            });
        }
    }
    out
}

/// Lateral half-spacing of left/right keypoints and their heights, meters.
const HIP_HALF_WIDTH: f64 = 0.12;
const JOINT_HEIGHTS: [f64; 3] = [0.1, 0.35, 0.6];
const SYNTHETIC_CONFIDENCE: f64 = 0.9;

/// Synthetic keypoints of a person standing at robot-frame `p`. All joints
/// share one noise offset so the chosen midpoint carries std `noise`.
pub fn synthesize_keypoints(
    p: Point2,
    e: Extrinsics,
    noise: (f64, f64),
) -> KeypointSet {
    let c = e.lidar_to_camera(p, 0.0);
    let mut k = KeypointSet::default();
    for j in Joint::PRIORITY {
        let y = JOINT_HEIGHTS[j.index()];
        for (side, off) in [(Side::Left, HIP_HALF_WIDTH), (Side::Right, -HIP_HALF_WIDTH)] {
            k.set(
                j,
                side,
                Keypoint {
                    pos: Point3::new(c.x + off + noise.0, y, c.z + noise.1),
                    confidence: SYNTHETIC_CONFIDENCE,
                },
            );
        }
    }
    k
}

/// One camera frame. Only people inside the field of view and range are
/// reported; there are no phantom detections. World-frame output.
pub fn simulate_camera(
    t: f64,
    humans: &[HumanState],
    robot: &Pose2D,
    model: &CameraNoiseModel,
    e: Extrinsics,
    rng: &mut ChaCha8Rng,
) -> Vec<Measurement> {
    let mut out = Vec::new();
    for h in humans {
        let local = robot.transform_to_body(h.position());
        let c = e.lidar_to_camera(local, 0.0);
        if !model.sees(c) {
            continue;
        }
        let std = model.std_at(c.x.hypot(c.z));
        let noise = (gaussian(rng, std), gaussian(rng, std));
        let k = synthesize_keypoints(local, e, noise);
        if let Some(m) = camera_pipeline(t, &k, e, 0.5, model) {
            out.push(m.to_world(robot));
        }
    }
    out
}

/// One line of a keypoint replay file (JSON Lines).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeypointRecord {
    pub t: f64,
    pub joint: Joint,
    pub side: Side,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub confidence: f64,
}

/// Recorded keypoint frames, one set per distinct timestamp, in time order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeypointReplay {
    pub frames: Vec<(f64, KeypointSet)>,
}

impl KeypointReplay {
    pub fn parse<R: BufRead>(reader: R) -> Result<Self, SensingError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let r: KeypointRecord = serde_json::from_str(trimmed)
                .map_err(|source| SensingError::Replay { line: i + 1, source })?;
            if !(r.t >= 0.0 && r.t.is_finite()) {
                return Err(SensingError::BadRecord { line: i + 1, reason: "t must be >= 0" });
            }
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(SensingError::BadRecord {
                    line: i + 1,
                    reason: "confidence outside [0, 1]",
                });
            }
            records.push(r);
        }
        records.sort_by(|a, b| a.t.total_cmp(&b.t));
        let mut frames: Vec<(f64, KeypointSet)> = Vec::new();
        for r in records {
            let kp = Keypoint {
                pos: Point3::new(r.x, r.y, r.z),
                confidence: r.confidence,
            };
            match frames.last_mut() {
                Some((t, set)) if *t == r.t => set.set(r.joint, r.side, kp),
                _ => frames.push((r.t, KeypointSet::default().with(r.joint, r.side, kp))),
            }
        }
        Ok(Self { frames })
    }

    pub fn load(path: &Path) -> Result<Self, SensingError> {
        let f = std::fs::File::open(path)?;
        Self::parse(std::io::BufReader::new(f))
    }

    /// Frames with timestamps in `(after, until]`.
    pub fn frames_between(&self, after: f64, until: f64) -> impl Iterator<Item = &(f64, KeypointSet)> {
        self.frames
            .iter()
            .filter(move |(t, _)| *t > after && *t <= until)
    }
}
