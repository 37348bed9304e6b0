//! Planar predicates used by the link classifier.
//!
//! All predicates work on exact `f64` orientation signs; there is no epsilon
//! snapping. A point lying exactly on a line is treated as touching.

use crate::scenario::{Building, Position};

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Position,
    pub max: Position,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Position>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in iter {
            bb.expand(*p);
        }
        Some(bb)
    }

    pub fn around(center: Position, radius: f64) -> Self {
        Aabb {
            min: Position::new(center.x - radius, center.y - radius),
            max: Position::new(center.x + radius, center.y + radius),
        }
    }

    pub fn expand(&mut self, p: Position) {
        self.min.x = self.min.x.min(p.x);
        self.min.y = self.min.y.min(p.y);
        self.max.x = self.max.x.max(p.x);
        self.max.y = self.max.y.max(p.y);
    }

    pub fn union(mut self, other: &Aabb) -> Self {
        self.expand(other.min);
        self.expand(other.max);
        self
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        self.min.x <= other.max.x && other.min.x <= self.max.x && self.min.y <= other.max.y && other.min.y <= self.max.y
    }

    pub fn diagonal(&self) -> f64 {
        self.min.distance(self.max)
    }
}

#[inline]
fn cross(o: Position, a: Position, b: Position) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

#[inline]
fn dot(o: Position, a: Position, b: Position) -> f64 {
    (a.x - o.x) * (b.x - o.x) + (a.y - o.y) * (b.y - o.y)
}

/// Parameter of the projection of `p` onto the line `a → b` (0 at `a`, 1 at `b`).
#[inline]
fn projection_param(a: Position, b: Position, p: Position) -> f64 {
    dot(a, b, p) / dot(a, b, b)
}

/// Closed-segment intersection: touching endpoints and collinear overlap count.
pub fn segments_intersect_closed(a: Position, b: Position, p: Position, q: Position) -> bool {
    let o1 = cross(a, b, p);
    let o2 = cross(a, b, q);
    let o3 = cross(p, q, a);
    let o4 = cross(p, q, b);
    if o1 == 0.0 && o2 == 0.0 {
        // collinear (or degenerate): compare extents on both axes
        let seg1 = Aabb::from_points([&a, &b]).expect("two points");
        let seg2 = Aabb::from_points([&p, &q]).expect("two points");
        return seg1.intersects(&seg2);
    }
    if o1 * o2 > 0.0 || o3 * o4 > 0.0 {
        return false;
    }
    true
}

/// Does the open segment `(a, b)` meet the closed segment `[p, q]`?
///
/// Contact at exactly `a` or `b` is excluded; any other shared point,
/// including a wall vertex touching the interior or a collinear overlap,
/// counts.
pub fn open_segment_meets(a: Position, b: Position, p: Position, q: Position) -> bool {
    let o1 = cross(a, b, p);
    let o2 = cross(a, b, q);
    if o1 == 0.0 && o2 == 0.0 {
        let tp = projection_param(a, b, p);
        let tq = projection_param(a, b, q);
        return tp.min(tq) < 1.0 && tp.max(tq) > 0.0;
    }
    if o1 * o2 > 0.0 {
        return false;
    }
    let o3 = cross(p, q, a);
    let o4 = cross(p, q, b);
    if o3 * o4 > 0.0 {
        return false;
    }
    // the supporting lines cross at a single point; it lies on [p, q]
    // and on [a, b]. Reject it when it is one of the open segment's ends.
    o3 != 0.0 && o4 != 0.0
}

/// True iff the open segment `(a, b)` properly crosses or touches any wall of
/// `building`.
pub fn segment_intersects_building(a: Position, b: Position, building: &Building) -> bool {
    let seg = Aabb::from_points([&a, &b]).expect("two points");
    if !seg.intersects(building.bbox()) {
        return false;
    }
    building.edges().any(|(p, q)| open_segment_meets(a, b, p, q))
}

/// Perpendicular distance from `third` to the infinite line through `ego` and
/// `target`.
///
/// This is the cross-product form `|(t − e) × (s − e)| / |t − e|`. Writing
/// the line as `y = m·x + c` with `m = (y_t − y_e)/(x_t − x_e)` and
/// multiplying numerator and denominator of the slope form
/// `|m·x_s − y_s − m·x_e + y_e| / √(m² + 1)` by `|x_t − x_e|` gives exactly
/// this expression, which stays defined for vertical links where the slope
/// form divides by zero (it reduces to `|x_s − x_e|` there).
pub fn orthogonal_distance(ego: Position, target: Position, third: Position) -> f64 {
    let len = ego.distance(target);
    cross(ego, target, third).abs() / len
}

/// Is `third` between `ego` and `target`: closer than `threshold` to their
/// line, with a projection strictly inside the segment?
pub fn is_between(ego: Position, target: Position, third: Position, threshold: f64) -> bool {
    let t = projection_param(ego, target, third);
    t > 0.0 && t < 1.0 && orthogonal_distance(ego, target, third) < threshold
}

/// Split of the `ego → target` segment at the projection of `third`:
/// `(distance ego→foot, distance foot→target)`.
pub fn split_distances(ego: Position, target: Position, third: Position) -> (f64, f64) {
    let len = ego.distance(target);
    let t = projection_param(ego, target, third);
    (t * len, (1.0 - t) * len)
}

/// Distance from `p` to the closed segment `[a, b]`.
pub fn point_segment_distance(p: Position, a: Position, b: Position) -> f64 {
    if a == b {
        return p.distance(a);
    }
    let t = projection_param(a, b, p).clamp(0.0, 1.0);
    let foot = Position::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
    p.distance(foot)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(x: f64, y: f64) -> Position {
        Position::new(x, y)
    }

    fn building(id: &str, pts: &[(f64, f64)]) -> Building {
        Building::new(id, pts.iter().map(|&(x, y)| pos(x, y)).collect()).unwrap()
    }

    #[test]
    fn triangle_crossing() {
        let tri = building("t", &[(5.0, -1.0), (6.0, 1.0), (4.0, 1.0)]);
        assert!(segment_intersects_building(pos(0.0, 0.0), pos(10.0, 0.0), &tri));
    }

    #[test]
    fn outside_bbox() {
        let tri = building("t", &[(5.0, 5.0), (6.0, 7.0), (4.0, 7.0)]);
        assert!(!segment_intersects_building(pos(0.0, 0.0), pos(10.0, 0.0), &tri));
    }

    #[test]
    fn collinear_overlap_counts() {
        let sq = building("s", &[(2.0, 0.0), (8.0, 0.0), (8.0, 5.0), (2.0, 5.0)]);
        assert!(segment_intersects_building(pos(0.0, 0.0), pos(10.0, 0.0), &sq));
        // wall that only continues past the far endpoint: touching at b only
        let beyond = building("b", &[(10.0, 0.0), (15.0, 0.0), (15.0, 5.0)]);
        assert!(!segment_intersects_building(pos(0.0, 0.0), pos(10.0, 0.0), &beyond));
    }

    #[test]
    fn vertex_touching_interior_counts() {
        let tri = building("t", &[(5.0, 0.0), (6.0, 3.0), (4.0, 3.0)]);
        assert!(segment_intersects_building(pos(0.0, 0.0), pos(10.0, 0.0), &tri));
    }

    #[test]
    fn endpoint_on_wall_excluded() {
        let sq = building("s", &[(10.0, -1.0), (12.0, -1.0), (12.0, 1.0), (10.0, 1.0)]);
        assert!(!segment_intersects_building(pos(0.0, 0.0), pos(10.0, 0.0), &sq));
        assert!(segment_intersects_building(pos(0.0, 0.0), pos(10.5, 0.0), &sq));
    }

    #[test]
    fn orthogonal_distance_cases() {
        let o = pos(0.0, 0.0);
        assert_eq!(orthogonal_distance(o, pos(100.0, 0.0), pos(50.0, 3.0)), 3.0);
        assert_eq!(orthogonal_distance(o, pos(0.0, 100.0), pos(2.0, 50.0)), 2.0);
        let d = orthogonal_distance(o, pos(100.0, 100.0), pos(50.0, 60.0));
        assert!((d - 7.071_067_811_865_475).abs() < 1e-12);
    }

    #[test]
    fn cross_product_form_matches_slope_form() {
        let cases = [
            (pos(0.0, 0.0), pos(100.0, 100.0), pos(50.0, 60.0)),
            (pos(3.0, -2.0), pos(-40.0, 17.5), pos(8.0, 9.0)),
            (pos(1e3, 2e3), pos(1.2e3, 1.9e3), pos(1.1e3, 2.2e3)),
        ];
        for (e, t, s) in cases {
            let m = (t.y - e.y) / (t.x - e.x);
            let slope = (m * s.x - s.y - m * e.x + e.y).abs() / (m * m + 1.0).sqrt();
            assert!((slope - orthogonal_distance(e, t, s)).abs() < 1e-9);
        }
    }

    #[test]
    fn between_rules() {
        let e = pos(0.0, 0.0);
        let t = pos(100.0, 0.0);
        assert!(is_between(e, t, pos(50.0, 0.0), 1e-9));
        assert!(!is_between(e, t, pos(150.0, 0.0), 1.0));
        assert!(!is_between(e, t, pos(-5.0, 0.0), 1.0));
        assert!(!is_between(e, t, pos(50.0, 1.0), 1.0));
        assert!(is_between(e, t, pos(50.0, 0.999), 1.0));
        assert!(!is_between(e, t, t, 1.0));
    }

    #[test]
    fn split_at_projection() {
        let (d1, d2) = split_distances(pos(0.0, 0.0), pos(100.0, 0.0), pos(50.0, 0.5));
        assert_eq!((d1, d2), (50.0, 50.0));
        // brute-force check: the foot point is the closest sample on the segment
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=10_000 {
            let x = i as f64 * 0.01;
            let d = pos(x, 0.0).distance(pos(50.0, 0.5));
            if d < best.0 {
                best = (d, x);
            }
        }
        assert!((best.1 - d1).abs() < 0.01);
        assert!((point_segment_distance(pos(50.0, 0.5), pos(0.0, 0.0), pos(100.0, 0.0)) - 0.5).abs() < 1e-12);
    }
}
