#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use v2x_emu::geometry::LinkCondition;
use v2x_emu::scenario::{Building, Position, ScenarioStep, VehicleState};

fn cross(ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    ax * by - ay * bx
}

/// Does the open segment `a`–`b` touch the closed segment `p`–`q`?
/// Parametric solve, kept independent of the library's orientation tests.
fn open_meets(a: Position, b: Position, p: Position, q: Position) -> bool {
    let (rx, ry) = (b.x - a.x, b.y - a.y);
    let (sx, sy) = (q.x - p.x, q.y - p.y);
    let (wx, wy) = (p.x - a.x, p.y - a.y);
    let denom = cross(rx, ry, sx, sy);
    if denom == 0.0 {
        if cross(wx, wy, rx, ry) != 0.0 {
            return false;
        }
        let rr = rx * rx + ry * ry;
        let t0 = (wx * rx + wy * ry) / rr;
        let t1 = ((q.x - a.x) * rx + (q.y - a.y) * ry) / rr;
        return t0.min(t1) < 1.0 && t0.max(t1) > 0.0;
    }
    let t = cross(wx, wy, sx, sy) / denom;
    let u = cross(wx, wy, rx, ry) / denom;
    t > 0.0 && t < 1.0 && (0.0..=1.0).contains(&u)
}

fn blocks(a: Position, b: Position, building: &Building) -> bool {
    let v = building.vertices();
    (0..v.len()).any(|i| open_meets(a, b, v[i], v[(i + 1) % v.len()]))
}

/// Projection parameter and perpendicular distance of `p` from line `a`–`b`.
fn project(a: Position, b: Position, p: Position) -> (f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    let foot = Position::new(a.x + t * dx, a.y + t * dy);
    (t, foot.distance(p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleLink {
    pub target: String,
    pub condition: LinkCondition,
    pub has_blocker: bool,
}

/// Unoptimized classifier: every target, every wall, every third vehicle, no
/// index and no culling. Output sorted by target id.
pub fn brute_force(step: &ScenarioStep, buildings: &[Building], threshold: f64) -> Vec<OracleLink> {
    let ego = step.ego.position;
    let mut out: Vec<OracleLink> = step
        .others
        .iter()
        .map(|target| {
            let tp = target.position;
            let condition = if tp == ego {
                LinkCondition::Los
            } else if buildings.iter().any(|b| blocks(ego, tp, b)) {
                LinkCondition::NlosBuilding
            } else if step.others.iter().any(|v| {
                if v.id == target.id {
                    return false;
                }
                let (t, d) = project(ego, tp, v.position);
                t > 0.0 && t < 1.0 && d < threshold
            }) {
                LinkCondition::NlosVehicle
            } else {
                LinkCondition::Los
            };
            OracleLink { target: target.id.clone(), condition, has_blocker: condition != LinkCondition::Los }
        })
        .collect();
    out.sort_by(|a, b| a.target.cmp(&b.target));
    out
}

/// Rotated rectangle with center `c`, half sides `hx`, `hy`.
pub fn rotated_rect(id: &str, c: Position, hx: f64, hy: f64, angle: f64) -> Building {
    let (s, co) = angle.sin_cos();
    let corners = [(-hx, -hy), (hx, -hy), (hx, hy), (-hx, hy)];
    let v = corners.iter().map(|&(x, y)| Position::new(c.x + x * co - y * s, c.y + x * s + y * co)).collect();
    Building::new(id, v).expect("rectangle is a valid polygon")
}

/// Regular `n`-gon, optionally with alternating radii (a star-ish concave
/// outline).
pub fn polygon(id: &str, c: Position, r: f64, n: usize, dent: f64) -> Building {
    let v = (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let rr = if k % 2 == 1 { r * dent } else { r };
            Position::new(c.x + rr * a.cos(), c.y + rr * a.sin())
        })
        .collect();
    Building::new(id, v).expect("valid polygon")
}

pub struct RandomScenario {
    pub step: ScenarioStep,
    pub buildings: Vec<Building>,
    pub threshold: f64,
}

/// Up to `max_vehicles` others and `max_buildings` buildings scattered in a
/// `size`×`size` square.
pub fn random_scenario(rng: &mut ChaCha8Rng, max_vehicles: usize, max_buildings: usize, size: f64) -> RandomScenario {
    let pos = |rng: &mut ChaCha8Rng| Position::new(rng.random_range(0.0..size), rng.random_range(0.0..size));
    let n_vehicles = rng.random_range(0..=max_vehicles);
    let n_buildings = rng.random_range(0..=max_buildings);
    let ego = VehicleState::new("ego", pos(rng), 10.0, 0.0);
    let mut others = Vec::with_capacity(n_vehicles);
    for i in 0..n_vehicles {
        let p = if i > 0 && rng.random_bool(0.2) {
            // near the segment to some earlier vehicle, to exercise NLOSv
            let other: &VehicleState = &others[rng.random_range(0..others.len())];
            let t: f64 = rng.random_range(0.05..0.95);
            let e = ego.position;
            let q = other.position;
            Position::new(
                e.x + t * (q.x - e.x) + rng.random_range(-2.0..2.0),
                e.y + t * (q.y - e.y) + rng.random_range(-2.0..2.0),
            )
        } else {
            pos(rng)
        };
        others.push(VehicleState::new(format!("v{i:03}"), p, rng.random_range(0.0..20.0), rng.random_range(0.0..6.0)));
    }
    let buildings = (0..n_buildings)
        .map(|i| {
            let id = format!("b{i:03}");
            let c = pos(rng);
            if rng.random_bool(0.7) {
                rotated_rect(
                    &id,
                    c,
                    rng.random_range(1.0..size / 20.0),
                    rng.random_range(1.0..size / 20.0),
                    rng.random_range(0.0..3.2),
                )
            } else {
                let n = 2 * rng.random_range(3..8);
                polygon(&id, c, rng.random_range(2.0..size / 15.0), n, rng.random_range(0.4..1.0))
            }
        })
        .collect();
    RandomScenario {
        step: ScenarioStep { timestamp: 0.0, ego, others },
        buildings,
        threshold: rng.random_range(0.2..5.0),
    }
}
