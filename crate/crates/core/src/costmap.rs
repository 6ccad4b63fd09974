//! Layered costmap: a static obstacle layer with inflation, a social layer
//! rasterized from tracked people, and a pointwise-max merge into the master
//! grid the planner reads.
//!
//! Costs are 0..=255 with 255 lethal and 254 "inscribed" (within a robot
//! radius of an obstacle). Cell `(ix, iy)` covers the half-open square
//! `[origin + ix*res, origin + (ix+1)*res) x [..)`, so a point on a shared
//! edge belongs to the cell whose lower edge it is.

use std::io::{BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::human::{HumanState, PersonalSpace, SocialParams, COST_CUTOFF};

pub const LETHAL: u8 = 255;
pub const INSCRIBED: u8 = 254;
pub const FREE: u8 = 0;

#[derive(Debug, Error)]
pub enum CostmapError {
    #[error("grid dimensions {got:?} do not match spec {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("layers have different grid specs")]
    SpecMismatch,
    #[error("nothing to merge")]
    NoLayers,
    #[error("invalid grid: {0}")]
    InvalidSpec(&'static str),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Point2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
}

impl GridSpec {
    pub fn new(origin: Point2, resolution: f64, width: usize, height: usize) -> Result<Self, CostmapError> {
        let s = Self {
            origin,
            resolution,
            width,
            height,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CostmapError> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(CostmapError::InvalidSpec("resolution must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CostmapError::InvalidSpec("grid must have at least one cell"));
        }
        if !(self.origin.x.is_finite() && self.origin.y.is_finite()) {
            return Err(CostmapError::InvalidSpec("origin must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Containing cell of a world point, by floor.
    pub fn cell_of(&self, p: Point2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn center(&self, ix: usize, iy: usize) -> Point2 {
        Point2::new(
            self.origin.x + (ix as f64 + 0.5) * self.resolution,
            self.origin.y + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    /// Inclusive cell index range covering the square of half-size `r`
    /// around `p`, clipped to the grid. `None` if it misses the grid.
    pub fn cell_window(&self, p: Point2, r: f64) -> Option<(usize, usize, usize, usize)> {
        let lo_x = ((p.x - r - self.origin.x) / self.resolution).floor().max(0.0);
        let lo_y = ((p.y - r - self.origin.y) / self.resolution).floor().max(0.0);
        let hi_x = ((p.x + r - self.origin.x) / self.resolution)
            .floor()
            .min(self.width as f64 - 1.0);
        let hi_y = ((p.y + r - self.origin.y) / self.resolution)
            .floor()
            .min(self.height as f64 - 1.0);
        if hi_x < lo_x || hi_y < lo_y {
            return None;
        }
        Some((lo_x as usize, lo_y as usize, hi_x as usize, hi_y as usize))
    }

    pub fn contains(&self, p: Point2) -> bool {
        self.cell_of(p).is_some()
    }

    /// World-space extent `(x_max, y_max)`.
    pub fn upper_corner(&self) -> Point2 {
        Point2::new(
            self.origin.x + self.width as f64 * self.resolution,
            self.origin.y + self.height as f64 * self.resolution,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Query {
    Cost(u8),
    OutOfBounds,
}

impl Query {
    /// Out-of-bounds reads as lethal.
    pub fn cost_or_lethal(self) -> u8 {
        match self {
            Query::Cost(c) => c,
            Query::OutOfBounds => LETHAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Costmap {
    spec: GridSpec,
    cells: Vec<u8>,
}

impl Costmap {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            cells: vec![FREE; spec.len()],
            spec,
        }
    }

    pub fn from_cells(spec: GridSpec, cells: Vec<u8>) -> Result<Self, CostmapError> {
        if cells.len() != spec.len() {
            return Err(CostmapError::DimensionMismatch {
                expected: (spec.width, spec.height),
                got: (cells.len(), 1),
            });
        }
        Ok(Self { spec, cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn get(&self, ix: usize, iy: usize) -> u8 {
        self.cells[self.spec.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, cost: u8) {
        let i = self.spec.index(ix, iy);
        self.cells[i] = cost;
    }

    fn raise(&mut self, ix: usize, iy: usize, cost: u8) {
        let i = self.spec.index(ix, iy);
        if cost > self.cells[i] {
            self.cells[i] = cost;
        }
    }

    pub fn query(&self, p: Point2) -> Query {
        match self.spec.cell_of(p) {
            Some((ix, iy)) => Query::Cost(self.get(ix, iy)),
            None => Query::OutOfBounds,
        }
    }

    pub fn max_cost(&self) -> u8 {
        self.cells.iter().copied().max().unwrap_or(FREE)
    }

    /// Writes a binary PGM, top row = largest y. Lethal renders black.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let GridSpec { width, height, .. } = self.spec;
        write!(w, "P5\n{width} {height}\n255\n")?;
        let mut row = vec![0u8; width];
        for iy in (0..height).rev() {
            for (ix, px) in row.iter_mut().enumerate() {
                *px = 255 - self.get(ix, iy);
            }
            w.write_all(&row)?;
        }
        Ok(())
    }

    /// `ix,iy,x,y,cost` for every cell, row-major from the origin.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["ix", "iy", "x", "y", "cost"])?;
        for iy in 0..self.spec.height {
            for ix in 0..self.spec.width {
                let c = self.spec.center(ix, iy);
                out.write_record(&[
                    ix.to_string(),
                    iy.to_string(),
                    c.x.to_string(),
                    c.y.to_string(),
                    self.get(ix, iy).to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Boolean obstacle grid, row-major from the origin (row 0 = smallest y).
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            cells: vec![false; width * height],
        }
    }

    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.width + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, occupied: bool) {
        self.cells[iy * self.width + ix] = occupied;
    }

    /// Marks every cell whose center lies in the axis-aligned rectangle.
    pub fn fill_rect(&mut self, spec: &GridSpec, min: Point2, max: Point2) {
        for iy in 0..self.height {
            for ix in 0..self.width {
                let c = spec.center(ix, iy);
                if c.x >= min.x && c.x <= max.x && c.y >= min.y && c.y <= max.y {
                    self.set(ix, iy, true);
                }
            }
        }
    }

    /// Reads a P2 or P5 PGM. Pixels at or below `threshold` are occupied.
    /// The first image row is the top of the map (largest y).
    pub fn read_pgm<R: Read>(reader: R, threshold: u8) -> Result<Self, CostmapError> {
        let mut r = std::io::BufReader::new(reader);
        let magic = next_token(&mut r)?;
        let width: usize = parse_token(&mut r)?;
        let height: usize = parse_token(&mut r)?;
        let maxval: usize = parse_token(&mut r)?;
        if width == 0 || height == 0 {
            return Err(CostmapError::Pgm("zero-sized image".into()));
        }
        if maxval == 0 || maxval > 255 {
            return Err(CostmapError::Pgm(format!("unsupported maxval {maxval}")));
        }
        let mut pixels = Vec::with_capacity(width * height);
        match magic.as_str() {
            "P5" => {
                let mut buf = vec![0u8; width * height];
                r.read_exact(&mut buf)
                    .map_err(|_| CostmapError::Pgm("truncated pixel data".into()))?;
                pixels.extend(buf);
            }
            "P2" => {
                for _ in 0..width * height {
                    let v: usize = parse_token(&mut r)?;
                    if v > maxval {
                        return Err(CostmapError::Pgm(format!("pixel {v} above maxval")));
                    }
                    pixels.push(v as u8);
                }
            }
            other => return Err(CostmapError::Pgm(format!("unsupported magic {other:?}"))),
        }
        let scale = |v: u8| (v as usize * 255 / maxval) as u8;
        let mut grid = Self::empty(width, height);
        for row in 0..height {
            let iy = height - 1 - row;
            for ix in 0..width {
                grid.set(ix, iy, scale(pixels[row * width + ix]) <= threshold);
            }
        }
        Ok(grid)
    }

    pub fn load_pgm(path: &Path, threshold: u8) -> Result<Self, CostmapError> {
        Self::read_pgm(std::fs::File::open(path)?, threshold)
    }
}

fn next_token<R: BufRead>(r: &mut R) -> Result<String, CostmapError> {
    let mut tok = String::new();
    loop {
        let mut byte = [0u8; 1];
        if r.read(&mut byte)? == 0 {
            break;
        }
        let c = byte[0] as char;
        if c == '#' && tok.is_empty() {
            let mut skip = String::new();
            r.read_line(&mut skip)?;
            continue;
        }
        if c.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            break;
        }
        tok.push(c);
    }
    if tok.is_empty() {
        return Err(CostmapError::Pgm("unexpected end of header".into()));
    }
    Ok(tok)
}

fn parse_token<R: BufRead, T: std::str::FromStr>(r: &mut R) -> Result<T, CostmapError> {
    let tok = next_token(r)?;
    tok.parse()
        .map_err(|_| CostmapError::Pgm(format!("bad number {tok:?}")))
}

/// Obstacle layer settings. Scenario key `map.inflation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InflationParams {
    /// Exponential decay rate of the cost beyond the inscribed radius, 1/m.
    pub decay: f64,
}

impl Default for InflationParams {
    fn default() -> Self {
        Self { decay: 10.0 }
    }
}

/// Inflated cost at distance `d` from the nearest obstacle cell center.
pub fn inflation_cost(d: f64, robot_radius: f64, decay: f64) -> u8 {
    if d <= 0.0 {
        return LETHAL;
    }
    if d <= robot_radius {
        return INSCRIBED;
    }
    let c = (INSCRIBED - 1) as f64 * (-decay * (d - robot_radius)).exp();
    if c < COST_CUTOFF {
        FREE
    } else {
        c.round() as u8
    }
}

pub fn rasterize_static(
    occupancy: &OccupancyGrid,
    robot_radius: f64,
    spec: &GridSpec,
    inflation: &InflationParams,
) -> Result<Costmap, CostmapError> {
    if occupancy.width != spec.width || occupancy.height != spec.height {
        return Err(CostmapError::DimensionMismatch {
            expected: (spec.width, spec.height),
            got: (occupancy.width, occupancy.height),
        });
    }
    if !(robot_radius >= 0.0) || !(inflation.decay > 0.0) {
        return Err(CostmapError::InvalidSpec("radius must be >= 0 and decay > 0"));
    }
    let mut map = Costmap::new(*spec);
    let reach = robot_radius + ((INSCRIBED - 1) as f64 / COST_CUTOFF).ln() / inflation.decay;
    let res = spec.resolution;
    let reach_cells = (reach / res).ceil() as isize;
    for iy in 0..spec.height {
        for ix in 0..spec.width {
            if !occupancy.get(ix, iy) {
                continue;
            }
            for dy in -reach_cells..=reach_cells {
                let jy = iy as isize + dy;
                if jy < 0 || jy >= spec.height as isize {
                    continue;
                }
                for dx in -reach_cells..=reach_cells {
                    let jx = ix as isize + dx;
                    if jx < 0 || jx >= spec.width as isize {
                        continue;
                    }
                    let d = ((dx * dx + dy * dy) as f64).sqrt() * res;
                    let c = inflation_cost(d, robot_radius, inflation.decay);
                    if c > FREE {
                        map.raise(jx as usize, jy as usize, c);
                    }
                }
            }
        }
    }
    Ok(map)
}

/// Social layer: lethal physical disks plus rounded personal-space costs,
/// combined across people by maximum.
pub fn rasterize_social(humans: &[HumanState], params: &SocialParams, spec: &GridSpec) -> Costmap {
    let mut map = Costmap::new(*spec);
    for h in humans {
        let ps = PersonalSpace::for_human(h, params);
        let reach = ps.support_radius(COST_CUTOFF).max(params.disk_radius);
        let Some((x0, y0, x1, y1)) = spec.cell_window(ps.center, reach) else {
            continue;
        };
        for iy in y0..=y1 {
            for ix in x0..=x1 {
                let q = spec.center(ix, iy);
                let c = if ps.center.distance(&q) <= params.disk_radius {
                    LETHAL
                } else {
                    let v = ps.cost(q);
                    if v < COST_CUTOFF {
                        continue;
                    }
                    v.round().min(INSCRIBED as f64) as u8
                };
                map.raise(ix, iy, c);
            }
        }
    }
    map
}

/// Pointwise maximum of layers sharing one grid.
pub fn merge(layers: &[&Costmap]) -> Result<Costmap, CostmapError> {
    let (first, rest) = layers.split_first().ok_or(CostmapError::NoLayers)?;
    let mut out = (*first).clone();
    for l in rest {
        if l.spec != out.spec {
            return Err(CostmapError::SpecMismatch);
        }
        for (o, &c) in out.cells.iter_mut().zip(&l.cells) {
            *o = (*o).max(c);
        }
    }
    Ok(out)
}
