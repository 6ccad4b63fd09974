//! Human personal-space model.
//!
//! A person occupies a physical disk and is surrounded by a psychological
//! comfort zone modelled as a Gaussian. Standing people get a round field
//! with a fixed spread; walking people get an egg-shaped field stretched
//! along their heading, with spreads that grow with walking speed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

/// Spread floor of the heading variance, also used for standing people.
pub const MIN_HEADING_SIGMA: f64 = 0.5;

/// Cost values below this (on the 0-255 scale) are not rasterized.
pub const COST_CUTOFF: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum HumanModelError {
    #[error("speed must be non-negative and finite, got {0}")]
    InvalidSpeed(f64),
    #[error("invalid social parameter: {0}")]
    InvalidParam(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HumanState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl HumanState {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Motion {
    Static,
    Moving { heading: f64 },
}

pub fn classify_motion(h: &HumanState, static_threshold: f64) -> Motion {
    if h.speed() <= static_threshold {
        Motion::Static
    } else {
        Motion::Moving {
            heading: h.vy.atan2(h.vx),
        }
    }
}

/// Directional spreads of the personal-space Gaussian, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spreads {
    pub heading: f64,
    pub side: f64,
    pub rear: f64,
}

impl Spreads {
    pub fn symmetric(sigma: f64) -> Self {
        Self {
            heading: sigma,
            side: sigma,
            rear: sigma,
        }
    }

    pub fn max(&self) -> f64 {
        self.heading.max(self.side).max(self.rear)
    }
}

/// Spreads for a person walking at `speed`: the heading spread is twice the
/// (scaled) speed with a floor of half a meter, the side spread two thirds
/// of it and the rear spread half of it.
pub fn variance_schedule(speed: f64, velocity_scale: f64) -> Result<Spreads, HumanModelError> {
    if !(speed >= 0.0) || !speed.is_finite() {
        return Err(HumanModelError::InvalidSpeed(speed));
    }
    let heading = (2.0 * velocity_scale * speed).max(MIN_HEADING_SIGMA);
    Ok(Spreads {
        heading,
        side: 2.0 / 3.0 * heading,
        rear: 0.5 * heading,
    })
}

/// Tunables of the social layer. Scenario key `social`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SocialParams {
    pub enabled: bool,
    /// Peak personal-space cost on the 0-255 scale.
    pub amplitude: f64,
    pub velocity_scale: f64,
    /// Radius of the lethal physical disk.
    pub disk_radius: f64,
    pub static_threshold: f64,
}

impl Default for SocialParams {
    fn default() -> Self {
        Self {
            enabled: true,
            amplitude: 254.0,
            velocity_scale: 1.0,
            disk_radius: 0.3,
            static_threshold: 0.1,
        }
    }
}

impl SocialParams {
    pub fn validate(&self) -> Result<(), HumanModelError> {
        if !(self.amplitude > 0.0 && self.amplitude <= 254.0) {
            return Err(HumanModelError::InvalidParam("amplitude must be in (0, 254]"));
        }
        if !(self.velocity_scale > 0.0 && self.velocity_scale.is_finite()) {
            return Err(HumanModelError::InvalidParam("velocity_scale must be positive"));
        }
        if !(self.disk_radius > 0.0 && self.disk_radius.is_finite()) {
            return Err(HumanModelError::InvalidParam("disk_radius must be positive"));
        }
        if !(self.static_threshold > 0.0 && self.static_threshold.is_finite()) {
            return Err(HumanModelError::InvalidParam("static_threshold must be positive"));
        }
        Ok(())
    }
}

/// Shape of one person's comfort zone, resolved from their state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PersonalSpace {
    pub center: Point2,
    /// Heading angle; zero for standing people, whose field is round.
    pub heading: f64,
    pub spreads: Spreads,
    pub amplitude: f64,
}

impl PersonalSpace {
    pub fn for_human(h: &HumanState, params: &SocialParams) -> Self {
        let (heading, spreads) = match classify_motion(h, params.static_threshold) {
            Motion::Static => (0.0, Spreads::symmetric(MIN_HEADING_SIGMA)),
            Motion::Moving { heading } => {
                // speed is finite and positive here
                let s = variance_schedule(h.speed(), params.velocity_scale)
                    .unwrap_or_else(|_| Spreads::symmetric(MIN_HEADING_SIGMA));
                (heading, s)
            }
        };
        Self {
            center: h.position(),
            heading,
            spreads,
            amplitude: params.amplitude,
        }
    }

    pub fn cost(&self, q: Point2) -> f64 {
        let (s, c) = self.heading.sin_cos();
        let dx = q.x - self.center.x;
        let dy = q.y - self.center.y;
        let along = c * dx + s * dy;
        let across = -s * dx + c * dy;
        let sigma_along = if along >= 0.0 {
            self.spreads.heading
        } else {
            self.spreads.rear
        };
        let e = along * along / (2.0 * sigma_along * sigma_along)
            + across * across / (2.0 * self.spreads.side * self.spreads.side);
        self.amplitude * (-e).exp()
    }

    /// Radius of a circle that contains every point with cost >= `cutoff`.
    pub fn support_radius(&self, cutoff: f64) -> f64 {
        if cutoff >= self.amplitude {
            return 0.0;
        }
        self.spreads.max() * (2.0 * (self.amplitude / cutoff).ln()).sqrt()
    }
}

/// Personal-space cost of `q` around the person `h`.
pub fn personal_space_cost(h: &HumanState, q: Point2, params: &SocialParams) -> f64 {
    PersonalSpace::for_human(h, params).cost(q)
}

/// Social-layer cost of a single point: 255 inside any physical disk,
/// otherwise the rounded maximum personal-space cost (0 below the cutoff).
pub fn social_cost_at(humans: &[HumanState], q: Point2, params: &SocialParams) -> u8 {
    let mut best = 0u8;
    for h in humans {
        if h.position().distance(&q) <= params.disk_radius {
            return crate::costmap::LETHAL;
        }
        let c = personal_space_cost(h, q, params);
        if c >= COST_CUTOFF {
            best = best.max(c.round().min(254.0) as u8);
        }
    }
    best
}
