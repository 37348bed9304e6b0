//! LOS / NLOSb / NLOSv classification of every ego link, with building and
//! vehicle scanning ranges limiting the objects considered.
//!
//! Per step and per target vehicle within the vehicle range:
//!
//! 1. buildings within the building range are tested first; the first wall
//!    crossing the ego–target segment makes the link NLOSb;
//! 2. otherwise every other in-range vehicle is tested; the first one
//!    between the two ends (lateral distance below the threshold, projection
//!    strictly inside the segment) makes the link NLOSv;
//! 3. otherwise the link is LOS.
//!
//! Both scans stop at the first hit and then move on to the next target.
//! Candidates are visited in id order so the reported blocker is
//! deterministic.

mod index;
mod primitives;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use index::{query_radius, SpatialIndex};
pub use primitives::{
    is_between, open_segment_meets, orthogonal_distance, point_segment_distance, segment_intersects_building,
    segments_intersect_closed, split_distances, Aabb,
};

use crate::scenario::{Building, ScenarioStep};

pub const DEFAULT_NLOSV_THRESHOLD: f64 = 1.0;
pub const DEFAULT_CELL_SIZE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LinkCondition {
    #[serde(rename = "LOS")]
    Los,
    #[serde(rename = "NLOSb")]
    NlosBuilding,
    #[serde(rename = "NLOSv")]
    NlosVehicle,
}

impl fmt::Display for LinkCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LinkCondition::Los => "LOS",
            LinkCondition::NlosBuilding => "NLOSb",
            LinkCondition::NlosVehicle => "NLOSv",
        })
    }
}

/// Building (`r_b`) and vehicle (`r_v`) scanning ranges around the ego.
/// Infinite values disable culling and serialize as `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CullingRanges {
    #[serde(with = "range_serde")]
    pub r_b: f64,
    #[serde(with = "range_serde")]
    pub r_v: f64,
}

impl Default for CullingRanges {
    fn default() -> Self {
        Self::unlimited()
    }
}

impl CullingRanges {
    pub fn new(r_b: f64, r_v: f64) -> Self {
        CullingRanges { r_b, r_v }
    }

    pub fn unlimited() -> Self {
        CullingRanges { r_b: f64::INFINITY, r_v: f64::INFINITY }
    }

    /// Rejects non-positive ranges. A building range larger than the vehicle
    /// range is legal but unusual and only logged.
    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_b > 0.0) || !(self.r_v > 0.0) {
            return Err(format!("scanning ranges must be > 0 (r_b={}, r_v={})", self.r_b, self.r_v));
        }
        if self.r_b > self.r_v {
            log::warn!("building range {} m exceeds vehicle range {} m", self.r_b, self.r_v);
        }
        Ok(())
    }
}

pub(crate) mod range_serde {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        struct RangeVisitor;
        impl Visitor<'_> for RangeVisitor {
            type Value = f64;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a range in meters or \"inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
                Ok(v)
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
                Ok(v as f64)
            }
            fn visit_unit<E: de::Error>(self) -> Result<f64, E> {
                Ok(f64::INFINITY)
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
                super::parse_range(v).map_err(E::custom)
            }
        }
        d.deserialize_any(RangeVisitor)
    }
}

/// Parse a range: meters, or `inf` / `infinity` for no culling.
pub fn parse_range(text: &str) -> Result<f64, String> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("inf") || t.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    t.parse::<f64>().map_err(|e| format!("invalid range `{t}`: {e}"))
}

/// What obstructs a non-LOS link. Indices point into the building list and
/// into `ScenarioStep::others`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Blocker {
    Building {
        index: usize,
    },
    /// `d1`: ego to the blocker's foot point on the link; `d2`: foot point
    /// to the target.
    Vehicle {
        index: usize,
        d1: f64,
        d2: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkClassification {
    /// Index of the target in `ScenarioStep::others`.
    pub target: usize,
    pub condition: LinkCondition,
    pub distance_2d: f64,
    pub blocker: Option<Blocker>,
}

/// Classified links of one step, sorted by target id. Contains exactly the
/// targets within the vehicle range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassificationResult {
    pub links: Vec<LinkClassification>,
}

impl ClassificationResult {
    pub fn count(&self, condition: LinkCondition) -> usize {
        self.links.iter().filter(|l| l.condition == condition).count()
    }

    pub fn get(&self, step: &ScenarioStep, id: &str) -> Option<&LinkClassification> {
        self.links.iter().find(|l| step.others[l.target].id == id)
    }
}

/// Objects surviving the range scans, each list in id order.
#[derive(Debug, Clone, Default)]
pub struct Culled {
    pub targets: Vec<usize>,
    pub buildings: Vec<usize>,
}

/// Static building data plus its spatial index, reused across steps.
pub struct Classifier<'a> {
    buildings: &'a [Building],
    /// Building indices sorted by id.
    by_id: Vec<usize>,
    /// Position of each building in `by_id`.
    rank: Vec<u32>,
    index: SpatialIndex,
    cell_size: f64,
}

impl<'a> Classifier<'a> {
    pub fn new(buildings: &'a [Building], cell_size: f64) -> Self {
        let mut by_id: Vec<usize> = (0..buildings.len()).collect();
        by_id.sort_by(|&a, &b| buildings[a].id().cmp(buildings[b].id()));
        let mut rank = vec![0u32; buildings.len()];
        for (r, &i) in by_id.iter().enumerate() {
            rank[i] = r as u32;
        }
        let boxes: Vec<Aabb> = buildings.iter().map(|b| *b.bbox()).collect();
        Classifier { buildings, by_id, rank, index: SpatialIndex::build(cell_size, &boxes), cell_size }
    }

    pub fn buildings(&self) -> &'a [Building] {
        self.buildings
    }

    /// Select the target vehicles within `r_v` (center distance) and the
    /// buildings within `r_b` (nearest-vertex distance) of the ego.
    pub fn cull(&self, step: &ScenarioStep, ranges: &CullingRanges) -> Culled {
        let ego = step.ego.position;
        let mut targets: Vec<usize> = if ranges.r_v.is_finite() {
            let vindex = SpatialIndex::build_points(self.cell_size, step.others.iter().map(|v| v.position));
            query_radius(&vindex, ego, ranges.r_v, |i| step.others[i].position.distance(ego))
        } else {
            (0..step.others.len()).collect()
        };
        targets.sort_by(|&a, &b| step.others[a].id.cmp(&step.others[b].id));

        let buildings = if ranges.r_b.is_finite() {
            let mut hits =
                query_radius(&self.index, ego, ranges.r_b, |i| self.buildings[i].nearest_vertex_distance(ego));
            hits.sort_unstable_by_key(|&i| self.rank[i]);
            hits
        } else {
            self.by_id.clone()
        };
        Culled { targets, buildings }
    }

    fn classify_target(
        &self,
        step: &ScenarioStep,
        culled: &Culled,
        target: usize,
        threshold: f64,
    ) -> LinkClassification {
        let ego = step.ego.position;
        let tpos = step.others[target].position;
        let distance_2d = ego.distance(tpos);
        let link = |condition, blocker| LinkClassification { target, condition, distance_2d, blocker };
        if distance_2d == 0.0 {
            // co-located: no segment to obstruct
            return link(LinkCondition::Los, None);
        }
        for &b in &culled.buildings {
            if segment_intersects_building(ego, tpos, &self.buildings[b]) {
                return link(LinkCondition::NlosBuilding, Some(Blocker::Building { index: b }));
            }
        }
        for &v in &culled.targets {
            if v == target {
                continue;
            }
            let third = step.others[v].position;
            if is_between(ego, tpos, third, threshold) {
                let (d1, d2) = split_distances(ego, tpos, third);
                return link(LinkCondition::NlosVehicle, Some(Blocker::Vehicle { index: v, d1, d2 }));
            }
        }
        link(LinkCondition::Los, None)
    }

    /// Classify every culled target. With a pool, targets fan out across its
    /// workers; results keep the culled (id) order either way.
    pub fn classify_culled(
        &self,
        step: &ScenarioStep,
        culled: &Culled,
        threshold: f64,
        pool: Option<&rayon::ThreadPool>,
    ) -> ClassificationResult {
        let links = match pool {
            Some(pool) => pool.install(|| {
                culled.targets.par_iter().map(|&t| self.classify_target(step, culled, t, threshold)).collect()
            }),
            None => culled.targets.iter().map(|&t| self.classify_target(step, culled, t, threshold)).collect(),
        };
        ClassificationResult { links }
    }

    pub fn classify(&self, step: &ScenarioStep, ranges: &CullingRanges, threshold: f64) -> ClassificationResult {
        let culled = self.cull(step, ranges);
        self.classify_culled(step, &culled, threshold, None)
    }
}

/// One-shot classification of a step; builds the building index on the fly.
pub fn classify_step(
    step: &ScenarioStep,
    buildings: &[Building],
    ranges: &CullingRanges,
    threshold: f64,
) -> ClassificationResult {
    Classifier::new(buildings, DEFAULT_CELL_SIZE).classify(step, ranges, threshold)
}
