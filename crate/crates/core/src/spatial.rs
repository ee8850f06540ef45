//! Exact fixed-radius neighbor search on a uniform hash grid.

use std::collections::HashMap;

use crate::geometry::Point3;

type CellKey = (i64, i64, i64);

/// Hash grid with cell size equal to the query radius, so a ball query only
/// needs the 27 cells around the query point. Results are exact: every
/// candidate is distance-checked.
pub struct NeighborGrid<'a> {
    points: &'a [Point3],
    radius: f64,
    cells: HashMap<CellKey, Vec<usize>>,
}

impl<'a> NeighborGrid<'a> {
    pub fn new(points: &'a [Point3], radius: f64) -> Self {
        Self::with_subset(points, radius, 0..points.len())
    }

    /// Grid over a subset of `points` (indices into the full slice).
    pub fn with_subset(points: &'a [Point3], radius: f64, subset: impl IntoIterator<Item = usize>) -> Self {
        assert!(radius > 0.0, "neighbor radius must be positive");
        let mut cells: HashMap<CellKey, Vec<usize>> = HashMap::new();
        for i in subset {
            cells.entry(key(&points[i], radius)).or_default().push(i);
        }
        Self {
            points,
            radius,
            cells,
        }
    }

    /// Indices within `radius` (inclusive) of `q`, in ascending order.
    pub fn within(&self, q: &Point3) -> Vec<usize> {
        let mut out = Vec::new();
        self.for_each_within(q, |i| out.push(i));
        out.sort_unstable();
        out
    }

    pub fn for_each_within(&self, q: &Point3, mut f: impl FnMut(usize)) {
        let r2 = self.radius * self.radius;
        let (cx, cy, cz) = key(q, self.radius);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(bucket) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in bucket {
                            if self.points[i].distance_sq(q) <= r2 {
                                f(i);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn count_within(&self, q: &Point3) -> usize {
        let mut n = 0;
        self.for_each_within(q, |_| n += 1);
        n
    }
}

fn key(p: &Point3, cell: f64) -> CellKey {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn matches_linear_scan(
            pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..200),
            r in 0.01..0.5f64,
            qi in any::<prop::sample::Index>(),
        ) {
            let pts: Vec<Point3> = pts.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            let grid = NeighborGrid::new(&pts, r);
            let q = pts[qi.index(pts.len())];
            let brute: Vec<usize> = (0..pts.len()).filter(|&i| pts[i].distance_sq(&q) <= r * r).collect();
            prop_assert_eq!(grid.within(&q), brute);
        }
    }
}
