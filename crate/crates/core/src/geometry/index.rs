//! Uniform grid over the bounding box of a set of objects.

use super::Aabb;
use crate::scenario::Position;

/// Upper bound on allocated cells; the cell size grows to respect it.
const MAX_CELLS: usize = 1 << 22;

/// Each object is registered in every cell its bounding box overlaps, so a
/// disc query returns a superset of the objects having any point inside the
/// disc.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell_size: f64,
    origin: Position,
    cols: usize,
    rows: usize,
    cells: Vec<Vec<u32>>,
    len: usize,
}

impl SpatialIndex {
    pub fn build(cell_size: f64, boxes: &[Aabb]) -> Self {
        assert!(cell_size > 0.0, "cell size must be positive");
        let Some(bounds) = boxes.iter().copied().reduce(|a, b| a.union(&b)) else {
            return SpatialIndex {
                cell_size,
                origin: Position::default(),
                cols: 0,
                rows: 0,
                cells: Vec::new(),
                len: 0,
            };
        };
        let width = bounds.max.x - bounds.min.x;
        let height = bounds.max.y - bounds.min.y;
        let mut cell_size = cell_size;
        while ((width / cell_size) as usize + 1).saturating_mul((height / cell_size) as usize + 1) > MAX_CELLS {
            cell_size *= 2.0;
        }
        let cols = (width / cell_size) as usize + 1;
        let rows = (height / cell_size) as usize + 1;
        let mut index = SpatialIndex {
            cell_size,
            origin: bounds.min,
            cols,
            rows,
            cells: vec![Vec::new(); cols * rows],
            len: boxes.len(),
        };
        for (i, bb) in boxes.iter().enumerate() {
            let (c0, r0, c1, r1) = index.cell_range(bb).expect("box lies inside bounds");
            for r in r0..=r1 {
                for c in c0..=c1 {
                    index.cells[r * cols + c].push(i as u32);
                }
            }
        }
        index
    }

    /// Index over points (e.g. vehicle centers).
    pub fn build_points(cell_size: f64, points: impl IntoIterator<Item = Position>) -> Self {
        let boxes: Vec<Aabb> = points.into_iter().map(|p| Aabb { min: p, max: p }).collect();
        Self::build(cell_size, &boxes)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn cell_range(&self, bb: &Aabb) -> Option<(usize, usize, usize, usize)> {
        if self.cols == 0 {
            return None;
        }
        let to_cell =
            |v: f64, o: f64, n: usize| -> usize { (((v - o) / self.cell_size).floor().max(0.0) as usize).min(n - 1) };
        let max_x = self.origin.x + self.cols as f64 * self.cell_size;
        let max_y = self.origin.y + self.rows as f64 * self.cell_size;
        if bb.max.x < self.origin.x || bb.max.y < self.origin.y || bb.min.x > max_x || bb.min.y > max_y {
            return None;
        }
        let c0 = to_cell(bb.min.x, self.origin.x, self.cols);
        let r0 = to_cell(bb.min.y, self.origin.y, self.rows);
        let c1 = to_cell(bb.max.x, self.origin.x, self.cols);
        let r1 = to_cell(bb.max.y, self.origin.y, self.rows);
        Some((c0, r0, c1, r1))
    }

    /// Candidate ids whose cells overlap the disc's bounding square, sorted
    /// and deduplicated. An infinite radius returns every object.
    pub fn candidates(&self, center: Position, radius: f64, out: &mut Vec<usize>) {
        out.clear();
        if !radius.is_finite() {
            out.extend(0..self.len);
            return;
        }
        let Some((c0, r0, c1, r1)) = self.cell_range(&Aabb::around(center, radius)) else {
            return;
        };
        for r in r0..=r1 {
            for c in c0..=c1 {
                out.extend(self.cells[r * self.cols + c].iter().map(|&i| i as usize));
            }
        }
        out.sort_unstable();
        out.dedup();
    }
}

/// Objects strictly closer than `radius` to `center`, by the exact
/// `distance` metric, in ascending id order.
pub fn query_radius(
    index: &SpatialIndex,
    center: Position,
    radius: f64,
    distance: impl Fn(usize) -> f64,
) -> Vec<usize> {
    let mut out = Vec::new();
    index.candidates(center, radius, &mut out);
    out.retain(|&i| distance(i) < radius);
    out
}
