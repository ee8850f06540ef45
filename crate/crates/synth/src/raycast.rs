//! Exact ray/primitive intersection. Rays are `o + t d` with `t > 0`; `d`
//! need not be unit length, so `t` is in units of `|d|`.

use crate::recipe::{Room, Shape};

const EPS: f64 = 1e-9;

fn smallest_positive(ts: impl IntoIterator<Item = f64>) -> Option<f64> {
    ts.into_iter().filter(|t| *t > EPS && t.is_finite()).min_by(f64::total_cmp)
}

fn ray_box(o: [f64; 3], d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
            continue;
        }
        let (a, b) = ((lo[k] - o[k]) / d[k], (hi[k] - o[k]) / d[k]);
        tmin = tmin.max(a.min(b));
        tmax = tmax.min(a.max(b));
    }
    if tmax < tmin {
        return None;
    }
    smallest_positive([tmin, tmax])
}

fn ray_sphere(o: [f64; 3], d: [f64; 3], c: [f64; 3], r: f64) -> Option<f64> {
    let oc = [o[0] - c[0], o[1] - c[1], o[2] - c[2]];
    let a = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let b = 2.0 * (oc[0] * d[0] + oc[1] * d[1] + oc[2] * d[2]);
    let cc = oc[0] * oc[0] + oc[1] * oc[1] + oc[2] * oc[2] - r * r;
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    smallest_positive([(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)])
}

fn ray_cylinder(o: [f64; 3], d: [f64; 3], c: [f64; 3], r: f64, h: f64) -> Option<f64> {
    let (z0, z1) = (c[2] - h / 2.0, c[2] + h / 2.0);
    let mut hits = Vec::with_capacity(4);
    let (ox, oy) = (o[0] - c[0], o[1] - c[1]);
    let a = d[0] * d[0] + d[1] * d[1];
    if a > 1e-15 {
        let b = 2.0 * (ox * d[0] + oy * d[1]);
        let cc = ox * ox + oy * oy - r * r;
        let disc = b * b - 4.0 * a * cc;
        if disc >= 0.0 {
            let s = disc.sqrt();
            for t in [(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)] {
                let z = o[2] + t * d[2];
                if z >= z0 && z <= z1 {
                    hits.push(t);
                }
            }
        }
    }
    if d[2].abs() > 1e-15 {
        for zc in [z0, z1] {
            let t = (zc - o[2]) / d[2];
            let (x, y) = (ox + t * d[0], oy + t * d[1]);
            if x * x + y * y <= r * r {
                hits.push(t);
            }
        }
    }
    smallest_positive(hits)
}

pub fn intersect(shape: &Shape, o: [f64; 3], d: [f64; 3]) -> Option<f64> {
    match *shape {
        Shape::Box { .. } => {
            let (lo, hi) = shape.bounds();
            ray_box(o, d, lo, hi)
        }
        Shape::Sphere { center, radius } => ray_sphere(o, d, center, radius),
        Shape::Cylinder { center, radius, height } => ray_cylinder(o, d, center, radius, height),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoomSurface {
    Floor,
    Wall,
}

/// Where a ray starting inside the room leaves it. The ceiling counts as wall.
pub fn room_exit(room: &Room, o: [f64; 3], d: [f64; 3]) -> Option<(f64, RoomSurface)> {
    let mut best: Option<(f64, RoomSurface)> = None;
    for k in 0..3 {
        if d[k].abs() < 1e-15 {
            continue;
        }
        let bound = if d[k] > 0.0 { room.max[k] } else { room.min[k] };
        let t = (bound - o[k]) / d[k];
        if t <= EPS {
            continue;
        }
        let surface = if k == 2 && d[k] < 0.0 { RoomSurface::Floor } else { RoomSurface::Wall };
        if best.is_none_or(|(bt, _)| t < bt) {
            best = Some((t, surface));
        }
    }
    best
}
