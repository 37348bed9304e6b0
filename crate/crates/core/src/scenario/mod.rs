//! Domain model of the simulated world: vehicles, buildings and per-step
//! snapshots, plus file ingestion and a synthetic city generator.

mod io;
mod synth;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segments_intersect_closed, Aabb};

pub use io::{
    load_buildings, load_trace, parse_buildings, parse_step_line, write_buildings, write_step, write_trace, TraceReader,
};
pub use synth::{generate_synthetic_scenario, GridSpec, SyntheticScenario};

/// Default vehicle footprint and height when a trace omits them.
pub const DEFAULT_LENGTH: f64 = 4.5;
pub const DEFAULT_WIDTH: f64 = 1.8;
pub const DEFAULT_HEIGHT: f64 = 1.5;

/// Mean earth radius used by the equirectangular projection.
pub const EARTH_RADIUS: f64 = 6_378_137.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}: parse error at line {line}, column {column}: {message}")]
    Parse { source_name: String, line: usize, column: usize, message: String },
    #[error("building `{id}`: invalid polygon: {reason}")]
    InvalidPolygon { id: String, reason: String },
    #[error("line {line}: timestamp {t} is not after previous step at {previous}")]
    NonMonotoneTimestamp { line: usize, t: f64, previous: f64 },
    #[error("line {line}: step has no ego vehicle")]
    MissingEgo { line: usize },
    #[error("line {line}: {reason}")]
    InvalidStep { line: usize, reason: String },
    #[error("invalid scenario parameters: {0}")]
    InvalidParameters(String),
}

/// Point in the local planar frame (x east, y north), meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Geodetic fix in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// Anchor of the equirectangular projection between the planar frame and
/// latitude/longitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoOrigin {
    pub lat: f64,
    pub lon: f64,
    meters_per_deg_lat: f64,
    meters_per_deg_lon: f64,
}

impl GeoOrigin {
    pub fn new(lat: f64, lon: f64) -> Self {
        let meters_per_deg_lat = EARTH_RADIUS.to_radians().abs();
        let meters_per_deg_lon = meters_per_deg_lat * lat.to_radians().cos();
        GeoOrigin { lat, lon, meters_per_deg_lat, meters_per_deg_lon }
    }

    pub fn to_geodetic(&self, p: Position) -> GeoPoint {
        GeoPoint { lat: self.lat + p.y / self.meters_per_deg_lat, lon: self.lon + p.x / self.meters_per_deg_lon }
    }

    pub fn to_planar(&self, g: GeoPoint) -> Position {
        Position { x: (g.lon - self.lon) * self.meters_per_deg_lon, y: (g.lat - self.lat) * self.meters_per_deg_lat }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: String,
    pub position: Position,
    /// m/s
    pub speed: f64,
    /// Radians counter-clockwise from east, in `[0, 2π)`.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl VehicleState {
    /// Vehicle with default passenger-car dimensions.
    pub fn new(id: impl Into<String>, position: Position, speed: f64, heading: f64) -> Self {
        VehicleState {
            id: id.into(),
            position,
            speed,
            heading: normalize_angle(heading),
            length: DEFAULT_LENGTH,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
        }
    }

    pub fn with_dimensions(mut self, length: f64, width: f64, height: f64) -> Self {
        self.length = length;
        self.width = width;
        self.height = height;
        self
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("vehicle with empty id".into());
        }
        if !self.position.is_finite() || !self.speed.is_finite() || !self.heading.is_finite() {
            return Err(format!("vehicle `{}` has non-finite state", self.id));
        }
        for (name, v) in [("length", self.length), ("width", self.width), ("height", self.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("vehicle `{}` has invalid {name} {v}", self.id));
            }
        }
        if !(0.0..TAU).contains(&self.heading) {
            return Err(format!("vehicle `{}` heading {} outside [0, 2π)", self.id, self.heading));
        }
        Ok(())
    }
}

/// Wrap an angle into `[0, 2π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Closed 2D polygon obstacle. The last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Building {
    id: String,
    vertices: Vec<Position>,
    bbox: Aabb,
}

impl Building {
    /// Validates vertex count, finiteness, non-zero area and simplicity.
    pub fn new(id: impl Into<String>, vertices: Vec<Position>) -> Result<Self, ScenarioError> {
        let id = id.into();
        let invalid = |reason: String| ScenarioError::InvalidPolygon { id: id.clone(), reason };
        if vertices.len() < 3 {
            return Err(invalid(format!("{} vertices, need at least 3", vertices.len())));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(invalid(format!("non-finite vertex ({}, {})", p.x, p.y)));
        }
        let n = vertices.len();
        for i in 0..n {
            if vertices[i] == vertices[(i + 1) % n] {
                return Err(invalid(format!("repeated vertex at index {i}")));
            }
        }
        let area2: f64 = (0..n)
            .map(|i| {
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                a.x * b.y - b.x * a.y
            })
            .sum();
        if area2 == 0.0 {
            return Err(invalid("zero area".into()));
        }
        // adjacent edges folding back onto each other
        for i in 0..n {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            let cross = (b.x - a.x) * (c.y - b.y) - (b.y - a.y) * (c.x - b.x);
            let dot = (b.x - a.x) * (c.x - b.x) + (b.y - a.y) * (c.y - b.y);
            if cross == 0.0 && dot < 0.0 {
                return Err(invalid(format!("edge folds back at vertex {}", (i + 1) % n)));
            }
        }
        for i in 0..n {
            for j in (i + 2)..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                let (a, b) = (vertices[i], vertices[(i + 1) % n]);
                let (p, q) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect_closed(a, b, p, q) {
                    return Err(invalid(format!("edges {i} and {j} intersect")));
                }
            }
        }
        let bbox = Aabb::from_points(&vertices).expect("non-empty");
        Ok(Building { id, vertices, bbox })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertices(&self) -> &[Position] {
        &self.vertices
    }

    pub fn bbox(&self) -> &Aabb {
        &self.bbox
    }

    /// Walls as `(start, end)` pairs, including the closing edge.
    pub fn edges(&self) -> impl Iterator<Item = (Position, Position)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Distance from `p` to the nearest vertex; the culling metric for
    /// building scanning ranges.
    pub fn nearest_vertex_distance(&self, p: Position) -> f64 {
        self.vertices.iter().map(|v| v.distance(p)).fold(f64::INFINITY, f64::min)
    }
}

/// All exact object positions at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioStep {
    /// Seconds since scenario start.
    pub timestamp: f64,
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
}

impl ScenarioStep {
    pub(crate) fn validate(&self) -> Result<(), String> {
        if !self.timestamp.is_finite() {
            return Err(format!("non-finite timestamp {}", self.timestamp));
        }
        self.ego.validate()?;
        let mut ids = std::collections::HashSet::with_capacity(self.others.len());
        for v in &self.others {
            v.validate()?;
            if v.id == self.ego.id {
                return Err(format!("ego id `{}` also listed among vehicles", v.id));
            }
            if !ids.insert(v.id.as_str()) {
                return Err(format!("duplicate vehicle id `{}`", v.id));
            }
        }
        Ok(())
    }
}

/// Projection anchor, nominal step period and antenna mounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub origin_lat: f64,
    pub origin_lon: f64,
    /// Nominal seconds between steps.
    pub step_period: f64,
    /// Added to vehicle height to obtain the antenna height, meters.
    pub antenna_height_offset: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig { origin_lat: 44.494_887, origin_lon: 11.342_616, step_period: 0.1, antenna_height_offset: 0.1 }
    }
}

impl ScenarioConfig {
    pub fn origin(&self) -> GeoOrigin {
        GeoOrigin::new(self.origin_lat, self.origin_lon)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.step_period > 0.0 && self.step_period.is_finite()) {
            return Err(format!("scenario.step_period must be > 0, got {}", self.step_period));
        }
        if !(self.origin_lat.abs() < 90.0 && self.origin_lon.is_finite()) {
            return Err("scenario origin out of range".into());
        }
        if !self.antenna_height_offset.is_finite() {
            return Err("scenario.antenna_height_offset must be finite".into());
        }
        Ok(())
    }

    pub fn antenna_height(&self, vehicle: &VehicleState) -> f64 {
        vehicle.height + self.antenna_height_offset
    }
}

/// Bounding box enclosing every building and every vehicle of every step.
pub fn scenario_bounds<'a>(buildings: &[Building], steps: impl IntoIterator<Item = &'a ScenarioStep>) -> Option<Aabb> {
    let mut bb: Option<Aabb> = None;
    let mut add = |p: Position| match bb.as_mut() {
        Some(b) => b.expand(p),
        None => bb = Some(Aabb { min: p, max: p }),
    };
    for b in buildings {
        add(b.bbox().min);
        add(b.bbox().max);
    }
    for s in steps {
        add(s.ego.position);
        for v in &s.others {
            add(v.position);
        }
    }
    bb
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn triangle_is_valid() {
        let b = Building::new("b", vec![Position::new(0.0, 0.0), Position::new(10.0, 0.0), Position::new(0.0, 10.0)])
            .unwrap();
        assert_eq!(b.vertices().len(), 3);
        assert_eq!(b.edges().count(), 3);
    }

    #[test]
    fn invalid_polygons_rejected() {
        let two = Building::new("two", vec![Position::new(0.0, 0.0), Position::new(1.0, 0.0)]);
        assert!(matches!(two, Err(ScenarioError::InvalidPolygon { ref id, .. }) if id == "two"));
        let bowtie = Building::new(
            "bow",
            vec![
                Position::new(0.0, 0.0),
                Position::new(10.0, 10.0),
                Position::new(10.0, 0.0),
                Position::new(0.0, 10.0),
            ],
        );
        assert!(bowtie.is_err());
        let flat =
            Building::new("flat", vec![Position::new(0.0, 0.0), Position::new(1.0, 0.0), Position::new(2.0, 0.0)]);
        assert!(flat.is_err());
    }

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_angle(-0.0), 0.0);
        assert!((normalize_angle(-std::f64::consts::FRAC_PI_2) - 1.5 * std::f64::consts::PI).abs() < 1e-12);
        assert!(normalize_angle(-1e-18) < TAU);
        assert_eq!(normalize_angle(TAU), 0.0);
    }

    proptest! {
        #[test]
        fn geodetic_round_trip(x in -10_000.0f64..10_000.0, y in -10_000.0f64..10_000.0,
                               lat in -70.0f64..70.0, lon in -179.0f64..179.0) {
            let origin = GeoOrigin::new(lat, lon);
            let p = Position::new(x, y);
            let back = origin.to_planar(origin.to_geodetic(p));
            prop_assert!(back.distance(p) < 1e-6);
        }
    }
}
