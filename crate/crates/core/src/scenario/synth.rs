//! Manhattan-grid synthetic city with vehicles circulating on the streets.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{normalize_angle, Building, Position, ScenarioError, ScenarioStep, VehicleState};
use crate::rng::{substream, STREAM_SCENARIO};

/// Width of the alleys separating lots inside one block, meters.
pub const LOT_GAP: f64 = 4.0;
/// Share of heavy vehicles (vans, trucks) tall enough to cause vehicle
/// diffraction loss.
pub const HEAVY_SHARE: f64 = 0.15;
const HEAVY_DIMS: (f64, f64, f64) = (7.5, 2.5, 3.2);
const SPEED_RANGE: (f64, f64) = (8.0, 14.0);

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Side of one square block, meters.
    pub block_size: f64,
    pub street_width: f64,
    /// Each block is split into `lots_per_side²` buildings.
    pub lots_per_side: usize,
    /// Total vehicles including the ego.
    pub vehicle_count: usize,
    /// Seconds of traffic to generate.
    pub duration: f64,
    pub step_period: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            blocks_x: 10,
            blocks_y: 10,
            block_size: 150.0,
            street_width: 20.0,
            lots_per_side: 5,
            vehicle_count: 500,
            duration: 60.0,
            step_period: 0.1,
            seed: 0,
        }
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::InvalidParameters(m.into()));
        if self.blocks_x == 0 || self.blocks_y == 0 {
            return bad("block counts must be positive");
        }
        if self.vehicle_count == 0 {
            return bad("vehicle_count must be positive");
        }
        if self.lots_per_side == 0 {
            return bad("lots_per_side must be positive");
        }
        if !(self.block_size > 0.0 && self.street_width > 0.0) {
            return bad("block_size and street_width must be positive");
        }
        if !(self.duration > 0.0 && self.step_period > 0.0) {
            return bad("duration and step_period must be positive");
        }
        if self.lot_size() <= 0.0 {
            return bad("block_size too small for the requested lots");
        }
        Ok(())
    }

    fn pitch(&self) -> f64 {
        self.block_size + self.street_width
    }

    fn lot_size(&self) -> f64 {
        let k = self.lots_per_side as f64;
        (self.block_size - (k - 1.0) * LOT_GAP) / k
    }

    pub fn step_count(&self) -> usize {
        (self.duration / self.step_period).round() as usize
    }

    pub fn building_count(&self) -> usize {
        self.blocks_x * self.blocks_y * self.lots_per_side * self.lots_per_side
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScenario {
    pub buildings: Vec<Building>,
    pub steps: Vec<ScenarioStep>,
}

type Node = (usize, usize);

struct Mover {
    from: Node,
    to: Node,
    progress: f64,
    speed: f64,
    dims: (f64, f64, f64),
}

fn neighbors(spec: &GridSpec, (i, j): Node) -> Vec<Node> {
    let mut out = Vec::with_capacity(4);
    if i > 0 {
        out.push((i - 1, j));
    }
    if i < spec.blocks_x {
        out.push((i + 1, j));
    }
    if j > 0 {
        out.push((i, j - 1));
    }
    if j < spec.blocks_y {
        out.push((i, j + 1));
    }
    out
}

fn node_position(spec: &GridSpec, (i, j): Node) -> Position {
    Position::new(i as f64 * spec.pitch(), j as f64 * spec.pitch())
}

fn build_city(spec: &GridSpec) -> Vec<Building> {
    let pitch = spec.pitch();
    let lot = spec.lot_size();
    let mut buildings = Vec::with_capacity(spec.building_count());
    for bj in 0..spec.blocks_y {
        for bi in 0..spec.blocks_x {
            let x0 = bi as f64 * pitch + spec.street_width / 2.0;
            let y0 = bj as f64 * pitch + spec.street_width / 2.0;
            for lj in 0..spec.lots_per_side {
                for li in 0..spec.lots_per_side {
                    let x = x0 + li as f64 * (lot + LOT_GAP);
                    let y = y0 + lj as f64 * (lot + LOT_GAP);
                    let id = format!("b{:06}", buildings.len());
                    let vertices = vec![
                        Position::new(x, y),
                        Position::new(x + lot, y),
                        Position::new(x + lot, y + lot),
                        Position::new(x, y + lot),
                    ];
                    buildings.push(Building::new(id, vertices).expect("axis-aligned lot is valid"));
                }
            }
        }
    }
    buildings
}

impl Mover {
    fn spawn(spec: &GridSpec, rng: &mut ChaCha8Rng) -> Self {
        let from = (rng.random_range(0..=spec.blocks_x), rng.random_range(0..=spec.blocks_y));
        let to = *neighbors(spec, from).choose(rng).expect("grid node has neighbors");
        let heavy = rng.random::<f64>() < HEAVY_SHARE;
        Mover {
            from,
            to,
            progress: rng.random_range(0.0..spec.pitch()),
            speed: rng.random_range(SPEED_RANGE.0..SPEED_RANGE.1),
            dims: if heavy { HEAVY_DIMS } else { (super::DEFAULT_LENGTH, super::DEFAULT_WIDTH, super::DEFAULT_HEIGHT) },
        }
    }

    fn state(&self, spec: &GridSpec, id: String) -> VehicleState {
        let a = node_position(spec, self.from);
        let b = node_position(spec, self.to);
        let len = a.distance(b);
        let (dx, dy) = ((b.x - a.x) / len, (b.y - a.y) / len);
        // drive on the right-hand lane
        let lane = spec.street_width / 4.0;
        let position = Position::new(a.x + dx * self.progress + dy * lane, a.y + dy * self.progress - dx * lane);
        let (l, w, h) = self.dims;
        VehicleState::new(id, position, self.speed, normalize_angle(dy.atan2(dx))).with_dimensions(l, w, h)
    }

    fn advance(&mut self, spec: &GridSpec, dt: f64, rng: &mut ChaCha8Rng) {
        self.progress += self.speed * dt;
        let pitch = spec.pitch();
        while self.progress >= pitch {
            self.progress -= pitch;
            let options: Vec<Node> = neighbors(spec, self.to).into_iter().filter(|&n| n != self.from).collect();
            let next = *options.choose(rng).unwrap_or(&self.from);
            self.from = self.to;
            self.to = next;
        }
    }
}

/// Deterministic city and traffic for `spec`; identical inputs give
/// identical output. The first vehicle is the ego (`"ego"`), the rest are
/// `v0001`, `v0002`, ...
pub fn generate_synthetic_scenario(spec: &GridSpec) -> Result<SyntheticScenario, ScenarioError> {
    spec.validate()?;
    let mut rng = substream(spec.seed, STREAM_SCENARIO, "");
    let buildings = build_city(spec);
    let mut movers: Vec<Mover> = (0..spec.vehicle_count).map(|_| Mover::spawn(spec, &mut rng)).collect();
    let ids: Vec<String> =
        std::iter::once("ego".to_owned()).chain((1..spec.vehicle_count).map(|i| format!("v{i:04}"))).collect();
    let mut steps = Vec::with_capacity(spec.step_count());
    for k in 0..spec.step_count() {
        let mut states = movers.iter().zip(&ids).map(|(m, id)| m.state(spec, id.clone()));
        let ego = states.next().expect("vehicle_count > 0");
        steps.push(ScenarioStep { timestamp: k as f64 * spec.step_period, ego, others: states.collect() });
        for m in &mut movers {
            m.advance(spec, spec.step_period, &mut rng);
        }
    }
    Ok(SyntheticScenario { buildings, steps })
}
