//! Coordinate conventions, pinhole projection and box primitives.
//!
//! World frame is right-handed, metric, z-up. Camera frame follows the
//! usual pinhole convention: x right, y down, z forward. Poses map world
//! coordinates into the camera frame (`p_cam = R * p_world + t`).
//!
//! Pixel coordinates are continuous: pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)` and its center sits at `(i + 0.5, j + 0.5)`.
//! Raster lookups floor the continuous coordinate.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    pub fn distance_sq(&self, other: &Point3) -> f64 {
        let d = *self - *other;
        d.dot(&d)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(v: [f64; 3]) -> Self {
        Point3::new(v[0], v[1], v[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.as_array()
    }
}

impl Add for Point3 {
    type Output = Point3;
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point3 {
    type Output = Point3;
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Ordered point set. Indices are stable identifiers for the lifetime of a scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    colors: Option<Vec<[u8; 3]>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint(i));
        }
        Ok(Self {
            points,
            colors: None,
        })
    }

    pub fn with_colors(points: Vec<Point3>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if colors.len() != points.len() {
            return Err(Error::InvalidParameter(format!(
                "{} colors for {} points",
                colors.len(),
                points.len()
            )));
        }
        let mut cloud = Self::new(points)?;
        cloud.colors = Some(colors);
        Ok(cloud)
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn colors(&self) -> Option<&[[u8; 3]]> {
        self.colors.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> Point3 {
        self.points[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(format!("focal lengths must be positive ({}, {})", self.fx, self.fy));
        }
        if self.width == 0 || self.height == 0 {
            return Err("image size must be at least 1x1".into());
        }
        Ok(())
    }
}

/// Rigid world-to-camera transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    /// Row-major 3x3 rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    /// Camera at `eye` looking at `target`, world z-up.
    pub fn look_at(eye: Point3, target: Point3) -> Result<Self> {
        let f = target - eye;
        let fnorm = f.norm();
        if fnorm <= 0.0 {
            return Err(Error::InvalidParameter("eye and target coincide".into()));
        }
        let f = f * (1.0 / fnorm);
        let up = Point3::new(0.0, 0.0, 1.0);
        let r = cross(&f, &up);
        let rnorm = r.norm();
        if rnorm < 1e-9 {
            return Err(Error::InvalidParameter("view direction parallel to up".into()));
        }
        let r = r * (1.0 / rnorm);
        let d = cross(&f, &r);
        let rotation = [r.as_array(), d.as_array(), f.as_array()];
        let pose = Pose {
            rotation,
            translation: [0.0; 3],
        };
        let t = pose.rotate(&eye) * -1.0;
        Ok(Pose {
            rotation,
            translation: t.as_array(),
        })
    }

    pub fn rotate(&self, p: &Point3) -> Point3 {
        let r = &self.rotation;
        Point3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        )
    }

    pub fn transform(&self, p: &Point3) -> Point3 {
        self.rotate(p) + Point3::from(self.translation)
    }

    /// Camera-frame point back to world coordinates.
    pub fn inverse_transform(&self, pc: &Point3) -> Point3 {
        let q = *pc - Point3::from(self.translation);
        let r = &self.rotation;
        Point3::new(
            r[0][0] * q.x + r[1][0] * q.y + r[2][0] * q.z,
            r[0][1] * q.x + r[1][1] * q.y + r[2][1] * q.z,
            r[0][2] * q.x + r[1][2] * q.y + r[2][2] * q.z,
        )
    }

    pub fn camera_center(&self) -> Point3 {
        self.inverse_transform(&Point3::default())
    }

    /// Largest deviation of `R * R^T` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let r = &self.rotation;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

pub fn cross(a: &Point3, b: &Point3) -> Point3 {
    Point3::new(
        a.y * b.z - a.z * b.y,
        a.z * b.x - a.x * b.z,
        a.x * b.y - a.y * b.x,
    )
}

/// Row-major H x W raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::MaskShapeMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

pub type DepthMap = Raster<f32>;
pub type LabelMap = Raster<u16>;

/// One posed, segmented view of the scene.
///
/// Instance mask pixel values are `instance id + 1`; 0 marks background
/// and stuff. Semantic mask pixel values index the bundle's class table,
/// with 0 reserved for void.
#[derive(Debug, Clone)]
pub struct CameraFrame {
    pub frame_id: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub depth: DepthMap,
    pub semantic_mask: LabelMap,
    pub instance_mask: LabelMap,
    pub rgb: Option<image::RgbImage>,
}

impl CameraFrame {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Error::InvalidFrame {
            frame_id: self.frame_id,
            reason,
        };
        self.intrinsics.validate().map_err(fail)?;
        let err = self.pose.orthonormality_error();
        if err > 1e-6 {
            return Err(fail(format!("rotation not orthonormal (error {err:e})")));
        }
        self.check_mask_shapes()
    }

    pub fn check_mask_shapes(&self) -> Result<()> {
        let expected = (self.intrinsics.width, self.intrinsics.height);
        for shape in [
            self.depth.shape(),
            self.semantic_mask.shape(),
            self.instance_mask.shape(),
        ] {
            if shape != expected {
                return Err(Error::MaskShapeMismatch {
                    expected,
                    actual: shape,
                });
            }
        }
        if let Some(rgb) = &self.rgb {
            let shape = (rgb.width() as usize, rgb.height() as usize);
            if shape != expected {
                return Err(Error::MaskShapeMismatch {
                    expected,
                    actual: shape,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    pub fn pixel(&self) -> (usize, usize) {
        (self.u.floor() as usize, self.v.floor() as usize)
    }
}

pub fn project_point(p: &Point3, intrinsics: &CameraIntrinsics, pose: &Pose) -> Option<Projection> {
    let pc = pose.transform(p);
    if !(pc.z > 0.0) {
        return None;
    }
    let u = intrinsics.fx * pc.x / pc.z + intrinsics.cx;
    let v = intrinsics.fy * pc.y / pc.z + intrinsics.cy;
    let inside = u >= 0.0 && v >= 0.0 && u < intrinsics.width as f64 && v < intrinsics.height as f64;
    inside.then_some(Projection { u, v, depth: pc.z })
}

pub fn project_into(p: &Point3, frame: &CameraFrame) -> Option<Projection> {
    project_point(p, &frame.intrinsics, &frame.pose)
}

pub fn back_project(proj: &Projection, intrinsics: &CameraIntrinsics, pose: &Pose) -> Point3 {
    let pc = Point3::new(
        (proj.u - intrinsics.cx) * proj.depth / intrinsics.fx,
        (proj.v - intrinsics.cy) * proj.depth / intrinsics.fy,
        proj.depth,
    );
    pose.inverse_transform(&pc)
}

/// Depth-consistency tolerance: `|d - d_map| <= max(abs, rel * d_map)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthTolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for DepthTolerance {
    fn default() -> Self {
        Self { abs: 0.02, rel: 0.01 }
    }
}

impl DepthTolerance {
    pub fn accepts(&self, depth: f64, depth_map: f64) -> bool {
        (depth - depth_map).abs() <= self.abs.max(self.rel * depth_map)
    }
}

/// Projection of `p` if it is visible in `frame`, i.e. the projection lands in
/// the image and agrees with the depth map within `tol`.
pub fn visible_projection(p: &Point3, frame: &CameraFrame, tol: &DepthTolerance) -> Option<Projection> {
    let proj = project_into(p, frame)?;
    let (x, y) = proj.pixel();
    let d_map = frame.depth.get(x, y) as f64;
    if !(d_map > 0.0) || !d_map.is_finite() {
        return None;
    }
    tol.accepts(proj.depth, d_map).then_some(proj)
}

pub fn is_visible(p: &Point3, frame: &CameraFrame, tol: &DepthTolerance) -> bool {
    visible_projection(p, frame, tol).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb3 {
    pub fn contains(&self, p: &Point3) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    pub fn extents(&self) -> Point3 {
        self.max - self.min
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }
}

pub fn centroid_of(points: &[Point3]) -> Result<Point3> {
    if points.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let n = points.len() as f64;
    let sum = points.iter().fold(Point3::default(), |acc, p| acc + *p);
    Ok(sum * (1.0 / n))
}

pub fn aabb_of(points: &[Point3]) -> Result<Aabb3> {
    let first = points.first().ok_or(Error::EmptyPointSet)?;
    let mut min = *first;
    let mut max = *first;
    for p in &points[1..] {
        min = Point3::new(min.x.min(p.x), min.y.min(p.y), min.z.min(p.z));
        max = Point3::new(max.x.max(p.x), max.y.max(p.y), max.z.max(p.z));
    }
    Ok(Aabb3 { min, max })
}

/// Oriented rectangle in pixel space. `half_extents.0` runs along `angle`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox2 {
    pub center: (f64, f64),
    pub half_extents: (f64, f64),
    pub angle: f64,
}

impl OrientedBox2 {
    pub fn area(&self) -> f64 {
        4.0 * self.half_extents.0 * self.half_extents.1
    }

    pub fn corners(&self) -> [(f64, f64); 4] {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (a, b) = self.half_extents;
        let (cu, cv) = self.center;
        [(-a, -b), (a, -b), (a, b), (-a, b)].map(|(x, y)| (cu + c * x - s * y, cv + s * x + c * y))
    }

    /// Integer crop rectangle `(x0, y0, x1, y1)` (exclusive upper bounds) of the
    /// box's axis-aligned envelope, clamped to a `width x height` image.
    /// Always at least one pixel wide and tall.
    pub fn crop_rect(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let corners = self.corners();
        let (mut umin, mut umax, mut vmin, mut vmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for (u, v) in corners {
            umin = umin.min(u);
            umax = umax.max(u);
            vmin = vmin.min(v);
            vmax = vmax.max(v);
        }
        let clamp = |x: f64, hi: usize| x.max(0.0).min(hi as f64);
        let x0 = (clamp(umin.floor(), width) as usize).min(width - 1);
        let y0 = (clamp(vmin.floor(), height) as usize).min(height - 1);
        let x1 = (clamp(umax.ceil(), width) as usize).max(x0 + 1);
        let y1 = (clamp(vmax.ceil(), height) as usize).max(y0 + 1);
        (x0, y0, x1, y1)
    }
}

fn normalize_half_turn(mut angle: f64) -> f64 {
    use std::f64::consts::PI;
    while angle >= PI / 2.0 {
        angle -= PI;
    }
    while angle < -PI / 2.0 {
        angle += PI;
    }
    angle
}

fn orient(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * pts.len());
    for &p in pts.iter() {
        while hull.len() >= 2 && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && orient(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area enclosing rectangle by rotating calipers over the convex hull.
pub fn min_area_bbox_2d(pixels: &[(f64, f64)]) -> Result<OrientedBox2> {
    if pixels.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let hull = convex_hull(pixels);
    match hull.len() {
        1 => {
            return Ok(OrientedBox2 {
                center: hull[0],
                half_extents: (0.0, 0.0),
                angle: 0.0,
            })
        }
        2 => {
            let (a, b) = (hull[0], hull[1]);
            let (dx, dy) = (b.0 - a.0, b.1 - a.1);
            return Ok(OrientedBox2 {
                center: ((a.0 + b.0) / 2.0, (a.1 + b.1) / 2.0),
                half_extents: ((dx * dx + dy * dy).sqrt() / 2.0, 0.0),
                angle: normalize_half_turn(dy.atan2(dx)),
            });
        }
        _ => {}
    }

    let n = hull.len();
    let at = |i: usize| hull[i % n];
    let dot = |a: (f64, f64), b: (f64, f64)| a.0 * b.0 + a.1 * b.1;

    // Caliper indices, unbounded and read modulo n: furthest along the edge,
    // furthest from the edge, least along the edge. All three only advance.
    let (mut far_along, mut far_normal, mut near_along) = (1usize, 1usize, 1usize);
    let mut best: Option<(f64, OrientedBox2)> = None;
    for i in 0..n {
        let p = at(i);
        let q = at(i + 1);
        let len = ((q.0 - p.0).powi(2) + (q.1 - p.1).powi(2)).sqrt();
        let e = ((q.0 - p.0) / len, (q.1 - p.1) / len);
        let nrm = (-e.1, e.0);
        let rel = |k: usize| {
            let r = at(k);
            (r.0 - p.0, r.1 - p.1)
        };

        far_along = far_along.max(i + 1);
        while far_along < i + n && dot(rel(far_along + 1), e) > dot(rel(far_along), e) {
            far_along += 1;
        }
        far_normal = far_normal.max(far_along);
        while far_normal < i + n && dot(rel(far_normal + 1), nrm) > dot(rel(far_normal), nrm) {
            far_normal += 1;
        }
        near_along = near_along.max(far_normal);
        while near_along < i + n && dot(rel(near_along + 1), e) < dot(rel(near_along), e) {
            near_along += 1;
        }

        let hi = dot(rel(far_along), e);
        let lo = dot(rel(near_along), e).min(0.0);
        let width = dot(rel(far_normal), nrm);
        let area = (hi - lo) * width;
        let mid_along = (hi + lo) / 2.0;
        let mid_normal = width / 2.0;
        let candidate = OrientedBox2 {
            center: (
                p.0 + e.0 * mid_along + nrm.0 * mid_normal,
                p.1 + e.1 * mid_along + nrm.1 * mid_normal,
            ),
            half_extents: ((hi - lo) / 2.0, width / 2.0),
            angle: normalize_half_turn(e.1.atan2(e.0)),
        };
        let replace = match &best {
            None => true,
            Some((best_area, best_box)) => {
                let tie = (area - best_area).abs() <= 1e-12 * best_area.abs().max(1.0);
                if tie {
                    candidate.angle.abs() < best_box.angle.abs() - 1e-12
                } else {
                    area < *best_area
                }
            }
        };
        if replace {
            best = Some((area, candidate));
        }
    }
    Ok(best.map(|(_, b)| b).expect("hull has at least three vertices"))
}

/// Scale half-extents about the same center and angle.
pub fn enlarge_box(b: &OrientedBox2, factor: f64) -> Result<OrientedBox2> {
    if !(factor >= 1.0) {
        return Err(Error::InvalidParameter(format!("enlarge factor {factor} < 1")));
    }
    Ok(OrientedBox2 {
        half_extents: (b.half_extents.0 * factor, b.half_extents.1 * factor),
        ..*b
    })
}
