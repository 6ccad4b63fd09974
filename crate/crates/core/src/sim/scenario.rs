//! Scenario files: a YAML description of the map, the robot task, the
//! scripted people and every tunable of the stack.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmap::{CostmapError, GridSpec, InflationParams, OccupancyGrid};
use crate::fusion::FilterParams;
use crate::geometry::{Extrinsics, Point2, Pose2D};
use crate::human::SocialParams;
use crate::planner::{PlannerParams, RobotLimits};
use crate::sensing::{CameraNoiseModel, KeypointReplay, LidarNoiseModel};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("rate `{name}` must be positive, got {value}")]
    BadRate { name: &'static str, value: f64 },
    #[error("duration must be positive, got {0}")]
    BadDuration(f64),
    #[error("human {human} waypoint {index} at ({x}, {y}) is outside the map")]
    WaypointOutOfBounds { human: usize, index: usize, x: f64, y: f64 },
    #[error("human {0} has no waypoints")]
    NoWaypoints(usize),
    #[error("human {human}: {reason}")]
    BadHuman { human: usize, reason: &'static str },
    #[error("robot {what} at ({x}, {y}) is outside the map")]
    RobotOutOfBounds { what: &'static str, x: f64, y: f64 },
    #[error("map: {0}")]
    Map(#[from] CostmapError),
    #[error("{section}: {message}")]
    Section { section: &'static str, message: String },
}

fn section<E: std::fmt::Display>(section: &'static str) -> impl Fn(E) -> ScenarioError {
    move |e| ScenarioError::Section {
        section,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub sim_hz: f64,
    pub lidar_hz: f64,
    pub camera_hz: f64,
    pub plan_hz: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            sim_hz: 50.0,
            lidar_hz: 10.0,
            camera_hz: 15.0,
            plan_hz: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// Static map image; relative paths resolve against the scenario file.
    pub pgm: Option<PathBuf>,
    /// Pixels at or below this gray level are obstacles.
    pub occupied_threshold: u8,
    pub resolution: f64,
    /// World position of the lower-left corner.
    pub origin: Point2,
    /// Extent in meters when no image is given.
    pub size: Option<Point2>,
    pub obstacles: Vec<Rect>,
    pub inflation: InflationParams,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            pgm: None,
            occupied_threshold: 50,
            resolution: 0.05,
            origin: Point2::new(-4.0, -4.0),
            size: None,
            obstacles: Vec::new(),
            inflation: InflationParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub start: Pose2D,
    pub goal: Point2,
    #[serde(default = "default_goal_tolerance")]
    pub goal_tolerance: f64,
    #[serde(default)]
    pub limits: RobotLimits,
}

fn default_goal_tolerance() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorsConfig {
    pub lidar: LidarNoiseModel,
    pub camera: CameraNoiseModel,
    pub camera_enabled: bool,
    pub lidar_enabled: bool,
    /// Camera mounting offset; overridden by `calibration` when set.
    pub extrinsics: Extrinsics,
    /// Calibration file written by `socnav calibrate`.
    pub calibration: Option<PathBuf>,
    /// Recorded keypoints replacing the synthetic camera detector.
    pub camera_replay: Option<PathBuf>,
    pub min_confidence: f64,
}

impl Default for SensorsConfig {
    fn default() -> Self {
        Self {
            lidar: LidarNoiseModel::default(),
            camera: CameraNoiseModel::default(),
            camera_enabled: true,
            lidar_enabled: true,
            extrinsics: Extrinsics { dx: 0.1, dy: 0.0 },
            calibration: None,
            camera_replay: None,
            min_confidence: 0.5,
        }
    }
}

/// A person walking through waypoints at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HumanScript {
    /// First entry is the starting position.
    pub waypoints: Vec<Point2>,
    #[serde(default)]
    pub speed: f64,
    /// Time the person starts walking; they stand still before it.
    #[serde(default)]
    pub start_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub map: MapConfig,
    pub robot: RobotConfig,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub social: SocialParams,
    #[serde(default)]
    pub sensors: SensorsConfig,
    #[serde(default)]
    pub fusion: FilterParams,
    #[serde(default)]
    pub humans: Vec<HumanScript>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_duration() -> f64 {
    60.0
}

/// Static inputs resolved from files referenced by a scenario.
#[derive(Debug, Clone)]
pub struct ResolvedInputs {
    pub spec: GridSpec,
    pub occupancy: OccupancyGrid,
    pub extrinsics: Extrinsics,
    pub replay: Option<KeypointReplay>,
}

impl Scenario {
    pub fn from_yaml(text: &str) -> Result<Self, ScenarioError> {
        Ok(serde_yaml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut s = Self::from_yaml(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(s)
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Grid spec plus occupancy, from the image or the declared extent.
    pub fn build_map(&self) -> Result<(GridSpec, OccupancyGrid), ScenarioError> {
        let m = &self.map;
        let (spec, mut occ) = match &m.pgm {
            Some(p) => {
                let occ = OccupancyGrid::load_pgm(&self.resolve_path(p), m.occupied_threshold)?;
                let spec = GridSpec::new(m.origin, m.resolution, occ.width, occ.height)?;
                (spec, occ)
            }
            None => {
                let size = m.size.unwrap_or(Point2::new(8.0, 8.0));
                if !(size.x > 0.0 && size.y > 0.0) {
                    return Err(ScenarioError::Map(CostmapError::InvalidSpec("map size must be positive")));
                }
                if !(m.resolution > 0.0) {
                    return Err(ScenarioError::Map(CostmapError::InvalidSpec("resolution must be positive")));
                }
                let w = (size.x / m.resolution).round() as usize;
                let h = (size.y / m.resolution).round() as usize;
                let spec = GridSpec::new(m.origin, m.resolution, w, h)?;
                (spec, OccupancyGrid::empty(w, h))
            }
        };
        for r in &m.obstacles {
            occ.fill_rect(&spec, r.min, r.max);
        }
        Ok((spec, occ))
    }

    pub fn extrinsics(&self) -> Result<Extrinsics, ScenarioError> {
        let e = match &self.sensors.calibration {
            Some(p) => load_extrinsics(&self.resolve_path(p))?,
            None => self.sensors.extrinsics,
        };
        e.validate().map_err(section("sensors.extrinsics"))?;
        Ok(e)
    }

    /// Checks every parameter block and resolves referenced files.
    pub fn resolve(&self) -> Result<ResolvedInputs, ScenarioError> {
        let r = &self.rates;
        for (name, value) in [
            ("sim_hz", r.sim_hz),
            ("lidar_hz", r.lidar_hz),
            ("camera_hz", r.camera_hz),
            ("plan_hz", r.plan_hz),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ScenarioError::BadRate { name, value });
            }
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(ScenarioError::BadDuration(self.duration));
        }
        self.planner.validate().map_err(section("planner"))?;
        self.robot.limits.validate().map_err(section("robot.limits"))?;
        if !(self.robot.goal_tolerance > 0.0) {
            return Err(ScenarioError::Section {
                section: "robot",
                message: "goal_tolerance must be positive".into(),
            });
        }
        self.social.validate().map_err(section("social"))?;
        self.sensors.lidar.validate().map_err(section("sensors.lidar"))?;
        self.sensors.camera.validate().map_err(section("sensors.camera"))?;
        if !(0.0..=1.0).contains(&self.sensors.min_confidence) {
            return Err(ScenarioError::Section {
                section: "sensors",
                message: "min_confidence must be in [0, 1]".into(),
            });
        }
        self.fusion.validate().map_err(section("fusion"))?;
        if !(self.map.inflation.decay > 0.0) {
            return Err(ScenarioError::Section {
                section: "map.inflation",
                message: "decay must be positive".into(),
            });
        }

        let (spec, occupancy) = self.build_map()?;
        let start = self.robot.start.position();
        if !spec.contains(start) {
            return Err(ScenarioError::RobotOutOfBounds { what: "start", x: start.x, y: start.y });
        }
        let goal = self.robot.goal;
        if !spec.contains(goal) {
            return Err(ScenarioError::RobotOutOfBounds { what: "goal", x: goal.x, y: goal.y });
        }
        for (i, h) in self.humans.iter().enumerate() {
            if h.waypoints.is_empty() {
                return Err(ScenarioError::NoWaypoints(i));
            }
            if !(h.speed >= 0.0 && h.speed.is_finite()) {
                return Err(ScenarioError::BadHuman { human: i, reason: "speed must be >= 0" });
            }
            if !(h.start_time >= 0.0 && h.start_time.is_finite()) {
                return Err(ScenarioError::BadHuman { human: i, reason: "start_time must be >= 0" });
            }
            for (j, w) in h.waypoints.iter().enumerate() {
                if !spec.contains(*w) {
                    return Err(ScenarioError::WaypointOutOfBounds { human: i, index: j, x: w.x, y: w.y });
                }
            }
        }
        let extrinsics = self.extrinsics()?;
        let replay = match &self.sensors.camera_replay {
            Some(p) => Some(KeypointReplay::load(&self.resolve_path(p)).map_err(section("sensors.camera_replay"))?),
            None => None,
        };
        Ok(ResolvedInputs {
            spec,
            occupancy,
            extrinsics,
            replay,
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.resolve().map(|_| ())
    }
}

pub fn load_extrinsics(path: &Path) -> Result<Extrinsics, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_yaml::from_str(&text)?)
}

pub fn extrinsics_to_yaml(e: &Extrinsics) -> String {
    serde_yaml::to_string(e).expect("two floats always serialize")
}
