//! 2D occupancy grids and shortest paths to object footprints.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb3, PointCloud};

pub const SQRT2: f64 = std::f64::consts::SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub cell_size: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub inflation_radius: f64,
    /// Free border added around the cloud's footprint.
    pub margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.05,
            z_min: 0.05,
            z_max: 1.5,
            inflation_radius: 0.3,
            margin: 0.25,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::InvalidParameter(format!("cell size {} must be positive", self.cell_size)));
        }
        if !(self.z_min < self.z_max) {
            return Err(Error::InvalidParameter(format!("height band ({}, {}) is empty", self.z_min, self.z_max)));
        }
        if !(self.inflation_radius >= 0.0) || !(self.margin >= 0.0) {
            return Err(Error::InvalidParameter("inflation radius and margin must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub inflation_radius: f64,
}

/// Cell `(ix, iy)` covers `[origin + i*cell, origin + (i+1)*cell)` on each
/// axis and is stored at `iy * width + ix`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    pub occupied: Vec<bool>,
    pub inflation_radius: f64,
}

impl OccupancyGrid {
    pub fn empty(origin: [f64; 2], cell_size: f64, width: usize, height: usize, inflation_radius: f64) -> Self {
        Self {
            origin,
            cell_size,
            width,
            height,
            occupied: vec![false; width * height],
            inflation_radius,
        }
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            origin: self.origin,
            cell_size: self.cell_size,
            width: self.width,
            height: self.height,
            inflation_radius: self.inflation_radius,
        }
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.width + ix
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.width, idx / self.width)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.cell_size).floor();
        let fy = ((y - self.origin[1]) / self.cell_size).floor();
        (fx >= 0.0 && fy >= 0.0 && (fx as usize) < self.width && (fy as usize) < self.height).then_some((fx as usize, fy as usize))
    }

    pub fn center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.cell_size,
            self.origin[1] + (iy as f64 + 0.5) * self.cell_size,
        ]
    }

    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        self.occupied[self.index(ix, iy)]
    }

    pub fn set(&mut self, ix: usize, iy: usize, value: bool) {
        let i = self.index(ix, iy);
        self.occupied[i] = value;
    }

    /// Marks every cell within `radius` meters (center to center) of an
    /// occupied cell.
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let r = (radius / self.cell_size + 1e-9).floor() as i64;
        let mut out = self.clone();
        out.inflation_radius = radius;
        if r == 0 {
            return out;
        }
        let offsets: Vec<(i64, i64)> = (-r..=r)
            .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
            .filter(|(dx, dy)| dx * dx + dy * dy <= r * r)
            .collect();
        for iy in 0..self.height {
            for ix in 0..self.width {
                if !self.is_occupied(ix, iy) {
                    continue;
                }
                for (dx, dy) in &offsets {
                    let (x, y) = (ix as i64 + dx, iy as i64 + dy);
                    if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
                        out.set(x as usize, y as usize, true);
                    }
                }
            }
        }
        out
    }

    /// PGM debug image: occupied 0, free 255, north (max y) up.
    pub fn to_pgm(&self) -> Vec<u8> {
        let img = GrayImage::from_fn(self.width as u32, self.height as u32, |x, r| {
            let iy = self.height - 1 - r as usize;
            image::Luma([if self.is_occupied(x as usize, iy) { 0 } else { 255 }])
        });
        let mut out = Vec::new();
        PnmEncoder::new(&mut out)
            .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
            .write_image(img.as_raw(), self.width as u32, self.height as u32, ExtendedColorType::L8)
            .expect("in-memory PGM encoding");
        out
    }

    pub fn from_pgm(meta: &GridMeta, bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Pnm)?.to_luma8();
        if img.width() as usize != meta.width || img.height() as usize != meta.height {
            return Err(Error::InvalidParameter(format!(
                "grid image is {}x{}, metadata says {}x{}",
                img.width(),
                img.height(),
                meta.width,
                meta.height
            )));
        }
        let mut grid = OccupancyGrid::empty(meta.origin, meta.cell_size, meta.width, meta.height, meta.inflation_radius);
        for (x, r, px) in img.enumerate_pixels() {
            grid.set(x as usize, meta.height - 1 - r as usize, px.0[0] < 128);
        }
        Ok(grid)
    }
}

/// Grid over an explicit rectangle. A cell is occupied iff at least one
/// point with `z_min <= z <= z_max` falls in it; the result is then inflated.
pub fn rasterize_in_bounds(
    cloud: &PointCloud,
    origin: [f64; 2],
    width: usize,
    height: usize,
    config: &GridConfig,
) -> Result<OccupancyGrid> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let mut grid = OccupancyGrid::empty(origin, config.cell_size, width, height, 0.0);
    for p in cloud.points() {
        if p.z < config.z_min || p.z > config.z_max {
            continue;
        }
        if let Some((ix, iy)) = grid.cell_of(p.x, p.y) {
            grid.set(ix, iy, true);
        }
    }
    Ok(grid.inflate(config.inflation_radius))
}

/// Grid covering the cloud's xy footprint plus `margin`, with the origin
/// snapped to a multiple of the cell size.
pub fn rasterize_occupancy(cloud: &PointCloud, config: &GridConfig) -> Result<OccupancyGrid> {
    config.validate()?;
    if cloud.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in cloud.points() {
        lo = [lo[0].min(p.x), lo[1].min(p.y)];
        hi = [hi[0].max(p.x), hi[1].max(p.y)];
    }
    let c = config.cell_size;
    let origin = [
        ((lo[0] - config.margin) / c).floor() * c,
        ((lo[1] - config.margin) / c).floor() * c,
    ];
    let width = ((hi[0] + config.margin - origin[0]) / c).floor() as usize + 1;
    let height = ((hi[1] + config.margin - origin[1]) / c).floor() as usize + 1;
    rasterize_in_bounds(cloud, origin, width, height, config)
}

// ---------------------------------------------------------------------------
// Planning

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Start positions in occupied cells snap to free cells this close.
    pub start_snap_radius: f64,
    /// Goal cells lie within the inflation radius plus this many cells of
    /// the target footprint.
    pub goal_slack_cells: f64,
    pub smooth: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            start_snap_radius: 0.5,
            goal_slack_cells: 2.0,
            smooth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavPath {
    pub waypoints: Vec<[f64; 2]>,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal_object_id: Option<u32>,
}

/// The 8-connected move set. Diagonal moves may not cut an occupied corner.
pub fn neighbors(grid: &OccupancyGrid, idx: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
    let (x, y) = grid.coords(idx);
    const MOVES: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
    MOVES.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx as usize >= grid.width || ny as usize >= grid.height {
            return None;
        }
        let (nx, ny) = (nx as usize, ny as usize);
        if grid.is_occupied(nx, ny) {
            return None;
        }
        if dx != 0 && dy != 0 {
            if grid.is_occupied(nx, y) || grid.is_occupied(x, ny) {
                return None;
            }
            return Some((grid.index(nx, ny), SQRT2));
        }
        Some((grid.index(nx, ny), 1.0))
    })
}

pub fn octile(dx: f64, dy: f64) -> f64 {
    let (a, b) = (dx.abs(), dy.abs());
    a.max(b) - a.min(b) + SQRT2 * a.min(b)
}

fn rect_distance(x: f64, y: f64, lo: [f64; 2], hi: [f64; 2]) -> (f64, f64) {
    ((lo[0] - x).max(0.0).max(x - hi[0]), (lo[1] - y).max(0.0).max(y - hi[1]))
}

/// Free cells whose centers lie within `reach` meters of the box's xy footprint.
pub fn goal_cells(grid: &OccupancyGrid, goal: &Aabb3, reach: f64) -> Vec<usize> {
    let (lo, hi) = ([goal.min.x, goal.min.y], [goal.max.x, goal.max.y]);
    (0..grid.occupied.len())
        .filter(|&i| {
            let (ix, iy) = grid.coords(i);
            let c = grid.center(ix, iy);
            let (dx, dy) = rect_distance(c[0], c[1], lo, hi);
            !grid.occupied[i] && (dx * dx + dy * dy).sqrt() <= reach + 1e-9
        })
        .collect()
}

/// Start cell: the cell under `start` if free, else the nearest free cell
/// center within `radius` (ties to the lower index).
pub fn snap_start(grid: &OccupancyGrid, start: [f64; 2], radius: f64) -> Result<usize> {
    if let Some((ix, iy)) = grid.cell_of(start[0], start[1]) {
        if !grid.is_occupied(ix, iy) {
            return Ok(grid.index(ix, iy));
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for i in 0..grid.occupied.len() {
        if grid.occupied[i] {
            continue;
        }
        let (ix, iy) = grid.coords(i);
        let c = grid.center(ix, iy);
        let d = ((c[0] - start[0]).powi(2) + (c[1] - start[1]).powi(2)).sqrt();
        if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::StartBlocked)
}

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // BinaryHeap is a max-heap; invert so the smallest (f, g, idx) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(other.g.total_cmp(&self.g))
            .then(other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// A* from `start` to any of `goals` in cell units. Returns the cell
/// sequence and its cost (1 per straight step, sqrt 2 per diagonal).
pub fn astar(grid: &OccupancyGrid, start: usize, goals: &[usize]) -> Result<(Vec<usize>, f64)> {
    if goals.is_empty() {
        return Err(Error::GoalUnreachable);
    }
    let mut is_goal = vec![false; grid.occupied.len()];
    let (mut lo, mut hi) = ([usize::MAX; 2], [0usize; 2]);
    for &g in goals {
        is_goal[g] = true;
        let (x, y) = grid.coords(g);
        lo = [lo[0].min(x), lo[1].min(y)];
        hi = [hi[0].max(x), hi[1].max(y)];
    }
    // Octile distance to the goals' bounding rectangle: admissible and consistent.
    let h = |i: usize| {
        let (x, y) = grid.coords(i);
        let (dx, dy) = rect_distance(x as f64, y as f64, [lo[0] as f64, lo[1] as f64], [hi[0] as f64, hi[1] as f64]);
        octile(dx, dy)
    };
    let n = grid.occupied.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    g[start] = 0.0;
    open.push(Open { f: h(start), g: 0.0, idx: start });
    while let Some(Open { g: gc, idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if is_goal[idx] {
            let mut path = vec![idx];
            let mut cur = idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(cur);
            }
            path.reverse();
            return Ok((path, gc));
        }
        for (nb, cost) in neighbors(grid, idx) {
            let ng = gc + cost;
            if !closed[nb] && ng < g[nb] {
                g[nb] = ng;
                parent[nb] = idx;
                open.push(Open { f: ng + h(nb), g: ng, idx: nb });
            }
        }
    }
    Err(Error::PathNotFound)
}

fn segment_clear(grid: &OccupancyGrid, a: [f64; 2], b: [f64; 2]) -> bool {
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let steps = ((len / (grid.cell_size * 0.1)).ceil() as usize).max(1);
    (0..=steps).all(|s| {
        let t = s as f64 / steps as f64;
        let (x, y) = (a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]));
        grid.cell_of(x, y).is_some_and(|(ix, iy)| !grid.is_occupied(ix, iy))
    })
}

/// Greedy line-of-sight shortcutting: from each kept waypoint jump to the
/// farthest later waypoint reachable in a straight, obstacle-free line.
pub fn smooth_path(grid: &OccupancyGrid, waypoints: &[[f64; 2]]) -> Vec<[f64; 2]> {
    if waypoints.len() <= 2 {
        return waypoints.to_vec();
    }
    let mut out = vec![waypoints[0]];
    let mut i = 0;
    while i < waypoints.len() - 1 {
        let mut j = waypoints.len() - 1;
        while j > i + 1 && !segment_clear(grid, waypoints[i], waypoints[j]) {
            j -= 1;
        }
        out.push(waypoints[j]);
        i = j;
    }
    out
}

pub fn polyline_length(waypoints: &[[f64; 2]]) -> f64 {
    waypoints
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum()
}

/// Path from `start` to the perimeter of `goal_box`.
pub fn plan_path(
    grid: &OccupancyGrid,
    start: [f64; 2],
    goal_box: &Aabb3,
    goal_object_id: Option<u32>,
    config: &PlannerConfig,
) -> Result<NavPath> {
    let reach = grid.inflation_radius + config.goal_slack_cells * grid.cell_size;
    let goals = goal_cells(grid, goal_box, reach);
    if goals.is_empty() {
        return Err(Error::GoalUnreachable);
    }
    let s = snap_start(grid, start, config.start_snap_radius)?;
    let (cells, _) = astar(grid, s, &goals)?;
    let mut waypoints: Vec<[f64; 2]> = cells
        .iter()
        .map(|&c| {
            let (ix, iy) = grid.coords(c);
            grid.center(ix, iy)
        })
        .collect();
    if config.smooth {
        waypoints = smooth_path(grid, &waypoints);
    }
    Ok(NavPath {
        length: polyline_length(&waypoints),
        waypoints,
        goal_object_id,
    })
}
