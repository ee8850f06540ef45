use serde::{Deserialize, Serialize};

use crate::{Result, SynthError};

/// Axis-aligned room. The floor is `z = min[2]`; there is no ceiling geometry
/// in the point cloud, although rays leaving through the top still render as
/// wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Axis-aligned box given by its center and full edge lengths.
    Box { center: [f64; 3], size: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    /// Upright cylinder; `center` is the middle of the axis.
    Cylinder { center: [f64; 3], radius: f64, height: f64 },
}

impl Shape {
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Box { center, size } => (
                [0, 1, 2].map(|k| center[k] - size[k] / 2.0),
                [0, 1, 2].map(|k| center[k] + size[k] / 2.0),
            ),
            Shape::Sphere { center, radius } => (center.map(|c| c - radius), center.map(|c| c + radius)),
            Shape::Cylinder { center, radius, height } => (
                [center[0] - radius, center[1] - radius, center[2] - height / 2.0],
                [center[0] + radius, center[1] + radius, center[2] + height / 2.0],
            ),
        }
    }

    fn dims_positive(&self) -> bool {
        match *self {
            Shape::Box { size, .. } => size.iter().all(|s| *s > 0.0),
            Shape::Sphere { radius, .. } => radius > 0.0,
            Shape::Cylinder { radius, height, .. } => radius > 0.0 && height > 0.0,
        }
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Shape::Box { .. } => {
                let (lo, hi) = self.bounds();
                (0..3).all(|k| p[k] >= lo[k] && p[k] <= hi[k])
            }
            Shape::Sphere { center, radius } => {
                (0..3).map(|k| (p[k] - center[k]).powi(2)).sum::<f64>() <= radius * radius
            }
            Shape::Cylinder { center, radius, height } => {
                let r2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                r2 <= radius * radius && (p[2] - center[2]).abs() <= height / 2.0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    /// True class, recorded in the ground truth.
    pub class: String,
    /// Class painted into the semantic masks when it differs from `class`,
    /// e.g. to plant a segmenter mistake for caption-based correction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panoptic_class: Option<String>,
    pub shape: Shape,
    pub color: [u8; 3],
    /// Surface samples per square meter; the recipe default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

impl ObjectSpec {
    pub fn mask_class(&self) -> &str {
        self.panoptic_class.as_deref().unwrap_or(&self.class)
    }
}

/// Cameras evenly spaced on a horizontal circle, all aimed at `look_at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRing {
    pub count: usize,
    pub radius: f64,
    pub height: f64,
    pub center: [f64; 2],
    pub look_at: [f64; 3],
    /// Angle of the first camera, radians.
    #[serde(default)]
    pub phase: f64,
}

impl CameraRing {
    pub fn eyes(&self) -> Vec<[f64; 3]> {
        (0..self.count)
            .map(|i| {
                let a = self.phase + std::f64::consts::TAU * i as f64 / self.count as f64;
                [
                    self.center[0] + self.radius * a.cos(),
                    self.center[1] + self.radius * a.sin(),
                    self.height,
                ]
            })
            .collect()
    }
}

/// Independent, seeded noise sources; all zero means a noiseless bundle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Per-pixel probability of replacing the instance id by a random other id.
    pub mask_corruption: f64,
    /// Standard deviation of additive Gaussian depth noise, meters.
    pub depth_sigma: f64,
    /// Outlier points added uniformly inside the room, as a fraction of the
    /// surface point count.
    pub outlier_rate: f64,
}

fn default_resolution() -> [usize; 2] {
    [320, 240]
}
fn default_fov() -> f64 {
    70.0
}
fn default_object_density() -> f64 {
    4000.0
}
fn default_room_density() -> f64 {
    400.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRecipe {
    pub scene_id: String,
    pub room: Room,
    #[serde(default = "default_resolution")]
    pub resolution: [usize; 2],
    /// Horizontal field of view, degrees.
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default = "default_object_density")]
    pub object_density: f64,
    #[serde(default = "default_room_density")]
    pub room_density: f64,
    pub objects: Vec<ObjectSpec>,
    pub cameras: CameraRing,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl SceneRecipe {
    pub fn from_json(text: &str) -> Result<Self> {
        let recipe: SceneRecipe = serde_json::from_str(text)?;
        recipe.validate()?;
        Ok(recipe)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SynthError::Recipe(m));
        if self.objects.is_empty() {
            return bad("recipe has zero objects".into());
        }
        if self.objects.len() >= u16::MAX as usize {
            return bad(format!("too many objects ({})", self.objects.len()));
        }
        if self.scene_id.trim().is_empty() {
            return bad("scene_id is empty".into());
        }
        let Room { min, max } = self.room;
        if (0..3).any(|k| !(max[k] > min[k])) {
            return bad(format!("room extents are degenerate: {min:?} .. {max:?}"));
        }
        if self.resolution.contains(&0) {
            return bad("resolution must be at least 1x1".into());
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 179.0) {
            return bad(format!("field of view {} out of range", self.fov_deg));
        }
        if !(self.object_density > 0.0 && self.room_density > 0.0) {
            return bad("densities must be positive".into());
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.class.trim().is_empty() || o.mask_class().trim().is_empty() {
                return bad(format!("object {i} has an empty class"));
            }
            if ["floor", "wall"].contains(&o.mask_class()) {
                return bad(format!("object {i} uses the reserved class \"{}\"", o.mask_class()));
            }
            if !o.shape.dims_positive() {
                return bad(format!("object {i} has non-positive dimensions"));
            }
            if o.density.is_some_and(|d| !(d > 0.0)) {
                return bad(format!("object {i} has a non-positive density"));
            }
            let (lo, hi) = o.shape.bounds();
            if (0..3).any(|k| lo[k] < min[k] || hi[k] > max[k]) {
                return bad(format!("object {i} ({}) extends outside the room", o.class));
            }
        }
        if self.cameras.count == 0 {
            return bad("camera ring needs at least one camera".into());
        }
        let target = self.cameras.look_at;
        for (i, eye) in self.cameras.eyes().into_iter().enumerate() {
            if (0..3).any(|k| eye[k] <= min[k] || eye[k] >= max[k]) {
                return bad(format!("camera {i} at {eye:?} is outside the room"));
            }
            if let Some(o) = self.objects.iter().find(|o| o.shape.contains(eye)) {
                return bad(format!("camera {i} is inside object \"{}\"", o.class));
            }
            let horiz = ((target[0] - eye[0]).powi(2) + (target[1] - eye[1]).powi(2)).sqrt();
            if horiz < 1e-6 {
                return bad(format!("camera {i} looks straight up or down"));
            }
        }
        let n = &self.noise;
        for (name, v) in [("mask_corruption", n.mask_corruption), ("outlier_rate", n.outlier_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} must lie in [0, 1]"));
            }
        }
        if !(n.depth_sigma >= 0.0 && n.depth_sigma.is_finite()) {
            return bad(format!("depth_sigma {} must be non-negative", n.depth_sigma));
        }
        Ok(())
    }
}
