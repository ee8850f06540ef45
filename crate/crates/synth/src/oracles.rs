//! Slow reference implementations. Each one favors being obviously correct
//! over being fast; tests compare the production algorithms against them.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap};

use qsr_core::geometry::Point3;

/// Partition produced by DBSCAN: clusters as sorted index lists (ordered by
/// their smallest member) plus the sorted noise set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
}

impl Partition {
    pub fn canonical(mut clusters: Vec<Vec<usize>>, mut noise: Vec<usize>) -> Self {
        for c in &mut clusters {
            c.sort_unstable();
        }
        clusters.retain(|c| !c.is_empty());
        clusters.sort();
        noise.sort_unstable();
        Self { clusters, noise }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// O(n^2) DBSCAN. Neighborhoods are closed balls that include the point
/// itself. Core points connected through chains of core neighbors form a
/// cluster; a border point joins the cluster whose smallest core index is
/// lowest among the clusters it touches; everything else is noise.
pub fn dbscan_bruteforce(points: &[Point3], eps: f64, min_pts: usize) -> Partition {
    let n = points.len();
    let near = |i: usize, j: usize| {
        let (a, b) = (points[i], points[j]);
        (a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2) <= eps * eps
    };
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_pts).collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && near(i, j) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    // Root of each core point is the smallest core index in its component.
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut noise = Vec::new();
    for i in 0..n {
        if core[i] {
            let r = find(&mut parent, i);
            members.entry(r).or_default().push(i);
            continue;
        }
        let owner = (0..n).filter(|&j| core[j] && near(i, j)).map(|j| find(&mut parent, j)).min();
        match owner {
            Some(r) => members.entry(r).or_default().push(i),
            None => noise.push(i),
        }
    }
    Partition::canonical(members.into_values().collect(), noise)
}

fn bbox_area_at(points: &[(f64, f64)], theta: f64) -> f64 {
    let (c, s) = (theta.cos(), theta.sin());
    let (mut a0, mut a1, mut b0, mut b1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in points {
        let a = c * x + s * y;
        let b = -s * x + c * y;
        a0 = a0.min(a);
        a1 = a1.max(a);
        b0 = b0.min(b);
        b1 = b1.max(b);
    }
    (a1 - a0) * (b1 - b0)
}

/// Smallest axis-aligned bounding-box area over rotations of the point set.
///
/// Scans `[0, pi/2)` on a grid of `step` radians, then refines the best few
/// grid angles by golden-section search over one grid step either side, so
/// the result is not limited by the grid resolution.
pub fn min_area_bruteforce(points: &[(f64, f64)], step: f64) -> f64 {
    let steps = (std::f64::consts::FRAC_PI_2 / step).ceil() as usize;
    let mut grid: Vec<(f64, f64)> = (0..steps).map(|k| (bbox_area_at(points, k as f64 * step), k as f64 * step)).collect();
    grid.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = grid[0].0;
    for &(_, theta) in grid.iter().take(8) {
        let (mut lo, mut hi) = (theta - step, theta + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
        let (mut f1, mut f2) = (bbox_area_at(points, x1), bbox_area_at(points, x2));
        for _ in 0..200 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = bbox_area_at(points, x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = bbox_area_at(points, x2);
            }
            best = best.min(f1).min(f2);
            if hi - lo < 1e-13 {
                break;
            }
        }
    }
    best
}

/// Exhaustive cosine ranking: every entry scored as the f64 dot product of
/// the stored unit vectors (summed in dimension order), ordered by score
/// descending then id ascending, then the band / top-k / threshold rule.
pub fn cosine_scan(
    entries: &BTreeMap<u32, Vec<f32>>,
    query: &[f32],
    top_k: usize,
    band: f64,
    threshold: f64,
) -> Vec<(u32, f64)> {
    let mut pool: Vec<(u32, f64)> = entries
        .iter()
        .map(|(id, v)| {
            let mut dot = 0.0f64;
            for k in 0..v.len() {
                dot += f64::from(query[k]) * f64::from(v[k]);
            }
            (*id, dot)
        })
        .collect();
    // Selection by repeated extraction of the best remaining entry.
    let mut ordered = Vec::with_capacity(pool.len());
    while !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (bi, bs) = pool[best];
            let (ci, cs) = pool[i];
            if cs > bs || (cs == bs && ci < bi) {
                best = i;
            }
        }
        ordered.push(pool.swap_remove(best));
    }
    let Some(&(_, top)) = ordered.first() else {
        return ordered;
    };
    let mut out = Vec::new();
    for (rank, &(id, s)) in ordered.iter().enumerate() {
        if rank >= top_k && s < top - band {
            break;
        }
        out.push((id, s));
    }
    out.retain(|(_, s)| *s >= threshold);
    out
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Multi-goal Dijkstra on an 8-connected grid without corner cutting:
/// straight moves cost 1, diagonal moves cost sqrt(2) and need both adjacent
/// orthogonal cells free. Returns the cheapest cost to any goal.
pub fn grid_dijkstra(occupied: &[bool], width: usize, height: usize, start: usize, goals: &[usize]) -> Option<f64> {
    if occupied[start] {
        return None;
    }
    let free = |x: i64, y: i64| x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && !occupied[y as usize * width + x as usize];
    let mut dist = vec![f64::INFINITY; width * height];
    let mut is_goal = vec![false; width * height];
    for &g in goals {
        is_goal[g] = true;
    }
    dist[start] = 0.0;
    let mut heap = BinaryHeap::from([Entry(0.0, start)]);
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if is_goal[i] {
            return Some(d);
        }
        let (x, y) = ((i % width) as i64, (i / width) as i64);
        for dx in -1i64..=1 {
            for dy in -1i64..=1 {
                if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && !(free(x + dx, y) && free(x, y + dy)) {
                    continue;
                }
                let j = (y + dy) as usize * width + (x + dx) as usize;
                let nd = d + if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Entry(nd, j));
                }
            }
        }
    }
    None
}
