use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::{PI, TAU};
use std::path::Path;

use image::{Rgb, RgbImage};
use qsr_core::bundle::{write_bundle, SceneBundle};
use qsr_core::geometry::{
    aabb_of, centroid_of, visible_projection, CameraFrame, CameraIntrinsics, DepthTolerance, Point3, PointCloud, Pose,
    Raster,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::raycast::{intersect, room_exit, RoomSurface};
use crate::recipe::{SceneRecipe, Shape};
use crate::truth::{oracle_relations, FrameObjects, GroundTruth, GtObject};
use crate::{Result, SynthError};

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";
pub const FLOOR_RGB: [u8; 3] = [112, 112, 112];
pub const WALL_RGB: [u8; 3] = [196, 196, 196];
pub const OUTLIER_RGB: [u8; 3] = [0, 0, 0];

// RNG streams, so that adding noise never perturbs the clean geometry.
const STREAM_SAMPLING: u64 = 1;
const STREAM_OUTLIERS: u64 = 2;
const STREAM_FRAME_BASE: u64 = 1000;

#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub cloud: PointCloud,
    pub frames: Vec<CameraFrame>,
    pub semantic_classes: BTreeMap<u16, String>,
    pub truth: GroundTruth,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn count_for(area: f64, density: f64) -> usize {
    (area * density).round() as usize
}

/// Uniform samples on an axis-aligned rectangle spanned by axes `u` and `v`
/// at `fixed` on the remaining axis.
fn sample_rect(
    rng: &mut ChaCha8Rng,
    out: &mut Vec<[f64; 3]>,
    density: f64,
    (u, u0, u1): (usize, f64, f64),
    (v, v0, v1): (usize, f64, f64),
    (w, fixed): (usize, f64),
) {
    let n = count_for((u1 - u0) * (v1 - v0), density);
    for _ in 0..n {
        let mut p = [0.0; 3];
        p[u] = rng.random_range(u0..=u1);
        p[v] = rng.random_range(v0..=v1);
        p[w] = fixed;
        out.push(p);
    }
}

fn sample_shape(rng: &mut ChaCha8Rng, shape: &Shape, density: f64) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    match *shape {
        Shape::Box { .. } => {
            let (lo, hi) = shape.bounds();
            for w in 0..3 {
                let (u, v) = ((w + 1) % 3, (w + 2) % 3);
                for fixed in [lo[w], hi[w]] {
                    sample_rect(rng, &mut out, density, (u, lo[u], hi[u]), (v, lo[v], hi[v]), (w, fixed));
                }
            }
        }
        Shape::Sphere { center, radius } => {
            let n = count_for(4.0 * PI * radius * radius, density);
            while out.len() < n {
                let g: [f64; 3] = [0; 3].map(|_| StandardNormal.sample(rng));
                let len = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if len < 1e-12 {
                    continue;
                }
                out.push([0, 1, 2].map(|k| center[k] + radius * g[k] / len));
            }
        }
        Shape::Cylinder { center, radius, height } => {
            let (z0, z1) = (center[2] - height / 2.0, center[2] + height / 2.0);
            for _ in 0..count_for(TAU * radius * height, density) {
                let a = rng.random_range(0.0..TAU);
                out.push([center[0] + radius * a.cos(), center[1] + radius * a.sin(), rng.random_range(z0..=z1)]);
            }
            for z in [z0, z1] {
                for _ in 0..count_for(PI * radius * radius, density) {
                    let a = rng.random_range(0.0..TAU);
                    let r = radius * rng.random::<f64>().sqrt();
                    out.push([center[0] + r * a.cos(), center[1] + r * a.sin(), z]);
                }
            }
        }
    }
    out
}

fn sample_room(rng: &mut ChaCha8Rng, recipe: &SceneRecipe) -> (Vec<[f64; 3]>, Vec<[f64; 3]>) {
    let (lo, hi) = (recipe.room.min, recipe.room.max);
    let d = recipe.room_density;
    let mut floor = Vec::new();
    sample_rect(rng, &mut floor, d, (0, lo[0], hi[0]), (1, lo[1], hi[1]), (2, lo[2]));
    let mut walls = Vec::new();
    for x in [lo[0], hi[0]] {
        sample_rect(rng, &mut walls, d, (1, lo[1], hi[1]), (2, lo[2], hi[2]), (0, x));
    }
    for y in [lo[1], hi[1]] {
        sample_rect(rng, &mut walls, d, (0, lo[0], hi[0]), (2, lo[2], hi[2]), (1, y));
    }
    (floor, walls)
}

/// Rounds through `f32`, the precision the bundle's point file stores, so
/// that ground truth is computed on exactly the coordinates a reader sees.
fn as_stored(p: [f64; 3]) -> Point3 {
    Point3::from(p.map(|c| c as f32 as f64))
}

pub fn intrinsics_for(recipe: &SceneRecipe) -> CameraIntrinsics {
    let [w, h] = recipe.resolution;
    let f = (w as f64 / 2.0) / (recipe.fov_deg.to_radians() / 2.0).tan();
    CameraIntrinsics {
        fx: f,
        fy: f,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        width: w,
        height: h,
    }
}

/// Camera-frame direction to world frame (`R^T d`).
fn to_world_dir(pose: &Pose, d: [f64; 3]) -> [f64; 3] {
    let r = &pose.rotation;
    [0, 1, 2].map(|j| r[0][j] * d[0] + r[1][j] * d[1] + r[2][j] * d[2])
}

struct Classes {
    table: BTreeMap<u16, String>,
    object_class_id: Vec<u16>,
    floor: u16,
    wall: u16,
}

fn class_table(recipe: &SceneRecipe) -> Classes {
    let names: BTreeSet<&str> = recipe.objects.iter().map(|o| o.mask_class()).collect();
    let mut table: BTreeMap<u16, String> = names.iter().zip(1u16..).map(|(n, id)| (id, n.to_string())).collect();
    let floor = table.len() as u16 + 1;
    let wall = floor + 1;
    table.insert(floor, "floor".into());
    table.insert(wall, "wall".into());
    let object_class_id = recipe
        .objects
        .iter()
        .map(|o| *table.iter().find(|(_, n)| n.as_str() == o.mask_class()).expect("listed").0)
        .collect();
    Classes {
        table,
        object_class_id,
        floor,
        wall,
    }
}

/// Renders one noiseless frame by casting a ray through every pixel center.
/// Depth is the camera-space z of the nearest hit.
fn render(recipe: &SceneRecipe, classes: &Classes, frame_id: u32, pose: Pose) -> CameraFrame {
    let intr = intrinsics_for(recipe);
    let (w, h) = (intr.width, intr.height);
    let eye = pose.camera_center().as_array();
    let mut depth = Raster::filled(w, h, 0f32);
    let mut semantic = Raster::filled(w, h, 0u16);
    let mut instance = Raster::filled(w, h, 0u16);
    let mut rgb = RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let dc = [
                (x as f64 + 0.5 - intr.cx) / intr.fx,
                (y as f64 + 0.5 - intr.cy) / intr.fy,
                1.0,
            ];
            let d = to_world_dir(&pose, dc);
            let mut best: Option<(f64, usize)> = None;
            for (i, o) in recipe.objects.iter().enumerate() {
                if let Some(t) = intersect(&o.shape, eye, d) {
                    if best.is_none_or(|(bt, _)| t < bt) {
                        best = Some((t, i));
                    }
                }
            }
            let room = room_exit(&recipe.room, eye, d);
            let (t, inst, sem, color) = match (best, room) {
                (Some((t, i)), r) if r.is_none_or(|(rt, _)| t <= rt) => {
                    (t, i as u16 + 1, classes.object_class_id[i], recipe.objects[i].color)
                }
                (_, Some((rt, RoomSurface::Floor))) => (rt, 0, classes.floor, FLOOR_RGB),
                (_, Some((rt, RoomSurface::Wall))) => (rt, 0, classes.wall, WALL_RGB),
                _ => (0.0, 0, 0, [0, 0, 0]),
            };
            depth.set(x, y, t as f32);
            semantic.set(x, y, sem);
            instance.set(x, y, inst);
            rgb.put_pixel(x as u32, y as u32, Rgb(color));
        }
    }
    CameraFrame {
        frame_id,
        intrinsics: intr,
        pose,
        depth,
        semantic_mask: semantic,
        instance_mask: instance,
        rgb: Some(rgb),
    }
}

/// Applies depth noise and mask corruption in place; returns the fraction of
/// instance pixels that changed.
fn add_frame_noise(recipe: &SceneRecipe, classes: &Classes, frame: &mut CameraFrame, rng: &mut ChaCha8Rng) -> f64 {
    let noise = recipe.noise;
    if noise.depth_sigma > 0.0 {
        let normal = Normal::new(0.0, noise.depth_sigma).expect("validated sigma");
        for d in frame.depth.data_mut() {
            *d = (*d as f64 + normal.sample(rng)).max(1e-6) as f32;
        }
    }
    if noise.mask_corruption <= 0.0 {
        return 0.0;
    }
    let n = recipe.objects.len() as u16;
    let mut flipped = 0usize;
    let (inst, sem) = (frame.instance_mask.data_mut(), frame.semantic_mask.data_mut());
    for (id, class) in inst.iter_mut().zip(sem.iter_mut()) {
        if !rng.random_bool(noise.mask_corruption) {
            continue;
        }
        // Uniform over the other n ids in 0..=n.
        let k = rng.random_range(0..n);
        let new = if k >= *id { k + 1 } else { k };
        if new > 0 {
            *class = classes.object_class_id[new as usize - 1];
        } else if *id > 0 {
            *class = 0;
        }
        *id = new;
        flipped += 1;
    }
    flipped as f64 / inst.len() as f64
}

/// Generates a scene in memory. Deterministic per `(recipe, seed)`.
pub fn generate_scene(recipe: &SceneRecipe, seed: u64) -> Result<GeneratedScene> {
    recipe.validate()?;
    let classes = class_table(recipe);

    let mut rng = rng_for(seed, STREAM_SAMPLING);
    let mut points = Vec::new();
    let mut colors = Vec::new();
    let mut owner: Vec<Option<u32>> = Vec::new();
    for (i, o) in recipe.objects.iter().enumerate() {
        let samples = sample_shape(&mut rng, &o.shape, o.density.unwrap_or(recipe.object_density));
        if samples.is_empty() {
            return Err(SynthError::Recipe(format!("object {i} ({}) received no surface samples", o.class)));
        }
        for p in samples {
            points.push(as_stored(p));
            colors.push(o.color);
            owner.push(Some(i as u32));
        }
    }
    let (floor, walls) = sample_room(&mut rng, recipe);
    for (list, color) in [(floor, FLOOR_RGB), (walls, WALL_RGB)] {
        for p in list {
            points.push(as_stored(p));
            colors.push(color);
            owner.push(None);
        }
    }
    if recipe.noise.outlier_rate > 0.0 {
        let mut orng = rng_for(seed, STREAM_OUTLIERS);
        let n = (points.len() as f64 * recipe.noise.outlier_rate).round() as usize;
        let (lo, hi) = (recipe.room.min, recipe.room.max);
        for _ in 0..n {
            let p = [0, 1, 2].map(|k| orng.random_range(lo[k]..hi[k]));
            points.push(as_stored(p));
            colors.push(OUTLIER_RGB);
            owner.push(None);
        }
    }

    let target = Point3::from(recipe.cameras.look_at);
    let poses: Vec<Pose> = recipe
        .cameras
        .eyes()
        .into_iter()
        .map(|e| Pose::look_at(Point3::from(e), target))
        .collect::<qsr_core::Result<_>>()?;
    let clean: Vec<CameraFrame> = poses
        .par_iter()
        .enumerate()
        .map(|(i, pose)| render(recipe, &classes, i as u32, *pose))
        .collect();

    let tol = DepthTolerance::default();
    let visible: Vec<bool> = points
        .par_iter()
        .map(|p| clean.iter().any(|f| visible_projection(p, f, &tol).is_some()))
        .collect();
    let frame_objects = clean
        .iter()
        .map(|f| {
            let ids: BTreeSet<u32> = f.instance_mask.data().iter().filter(|v| **v > 0).map(|v| u32::from(*v) - 1).collect();
            FrameObjects {
                frame_id: f.frame_id,
                object_ids: ids.into_iter().collect(),
            }
        })
        .collect();

    let noisy: Vec<(CameraFrame, f64)> = clean
        .into_par_iter()
        .map(|mut f| {
            let mut frng = rng_for(seed, STREAM_FRAME_BASE + u64::from(f.frame_id));
            let frac = add_frame_noise(recipe, &classes, &mut f, &mut frng);
            (f, frac)
        })
        .collect();
    let (frames, corrupted_fraction): (Vec<CameraFrame>, Vec<f64>) = noisy.into_iter().unzip();

    let mut objects = Vec::with_capacity(recipe.objects.len());
    for (i, o) in recipe.objects.iter().enumerate() {
        let members: Vec<Point3> = points
            .iter()
            .zip(&owner)
            .filter(|(_, w)| **w == Some(i as u32))
            .map(|(p, _)| *p)
            .collect();
        objects.push(GtObject {
            id: i as u32,
            class: o.class.clone(),
            panoptic_class: o.mask_class().to_string(),
            color: o.color,
            centroid: centroid_of(&members)?,
            aabb: aabb_of(&members)?,
            point_count: members.len(),
        });
    }
    let relations = oracle_relations(&objects);
    let truth = GroundTruth {
        scene_id: recipe.scene_id.clone(),
        seed,
        semantic_classes: classes.table.clone(),
        objects,
        point_instance: owner,
        visible,
        corrupted_fraction,
        frame_objects,
        relations,
    };
    Ok(GeneratedScene {
        cloud: PointCloud::with_colors(points, colors)?,
        frames,
        semantic_classes: classes.table,
        truth,
    })
}

/// Generates a scene and writes it as a bundle under `out`, with the ground
/// truth next to the manifest.
pub fn generate_bundle(recipe: &SceneRecipe, seed: u64, out: &Path) -> Result<(SceneBundle, GroundTruth)> {
    let scene = generate_scene(recipe, seed)?;
    let bundle = write_bundle(out, &recipe.scene_id, &scene.semantic_classes, &scene.cloud, &scene.frames)?;
    std::fs::write(out.join(GROUND_TRUTH_FILE), serde_json::to_string(&scene.truth)? + "\n")?;
    Ok((bundle, scene.truth))
}

pub fn read_ground_truth(bundle_root: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(bundle_root.join(GROUND_TRUTH_FILE))?;
    Ok(serde_json::from_str(&text)?)
}
