//! On-disk scene bundles.
//!
//! ```text
//! bundle/
//!   manifest.json            scene id, conventions, class table, file list
//!   points.ply               binary little-endian PLY: float x y z [uchar red green blue]
//!   frames/NNNN.json         intrinsics, world-to-camera pose, file names
//!   frames/NNNN.depth        row-major little-endian f32 depth in meters
//!   frames/NNNN_semantic.png 16-bit class ids (0 = void)
//!   frames/NNNN_instance.png 16-bit instance id + 1 (0 = background)
//!   frames/NNNN_rgb.png      8-bit RGB
//!   derived/                 pipeline outputs and hashes.json
//! ```
//!
//! Frame payloads are read on demand; [`SceneBundle::load`] only checks that
//! files exist and that depth files have the right size.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, RgbImage};
use ply_rs::parser::Parser;
use ply_rs::ply::{
    Addable, DefaultElement, ElementDef, Encoding, KeyMap, Ply, Property, PropertyDef, PropertyType, ScalarType,
};
use ply_rs::writer::Writer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraFrame, CameraIntrinsics, DepthMap, LabelMap, Point3, PointCloud, Pose, Raster};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DERIVED_DIR: &str = "derived";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Convention {
    pub pose: String,
    pub units: String,
    pub up: String,
    pub pixel_origin: String,
}

impl Default for Convention {
    fn default() -> Self {
        Self {
            pose: "world_to_camera".into(),
            units: "meters".into(),
            up: "z".into(),
            pixel_origin: "top_left_corner".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub scene_id: String,
    pub convention: Convention,
    /// Semantic mask value to class name. 0 is reserved for void.
    pub semantic_classes: BTreeMap<u16, String>,
    pub point_cloud: String,
    pub frames: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_id: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    pub depth: String,
    pub semantic_mask: String,
    pub instance_mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rgb: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub frames: Vec<FrameRecord>,
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

fn read_json<T: serde::de::DeserializeOwned>(root: &Path, path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::bundle(rel(root, path), e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| Error::bundle(rel(root, path), e.to_string()))
}

impl SceneBundle {
    pub fn load(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::bundle(root.display().to_string(), "bundle directory does not exist"));
        }
        let manifest: Manifest = read_json(root, &root.join(MANIFEST_FILE))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::bundle(
                MANIFEST_FILE,
                format!("field version: unsupported manifest version {}", manifest.version),
            ));
        }
        if manifest.scene_id.trim().is_empty() {
            return Err(Error::bundle(MANIFEST_FILE, "field scene_id: empty"));
        }
        if manifest.convention.pose != "world_to_camera" {
            return Err(Error::bundle(MANIFEST_FILE, "field convention.pose: only world_to_camera is supported"));
        }
        if manifest.semantic_classes.contains_key(&0) {
            return Err(Error::bundle(MANIFEST_FILE, "field semantic_classes: id 0 is reserved for void"));
        }
        if !root.join(&manifest.point_cloud).is_file() {
            return Err(Error::bundle(MANIFEST_FILE, format!("field point_cloud: {} is missing", manifest.point_cloud)));
        }
        let mut frames = Vec::with_capacity(manifest.frames.len());
        for name in &manifest.frames {
            let path = root.join(name);
            let rec: FrameRecord = read_json(root, &path)?;
            let dir = path.parent().unwrap_or(root);
            let frame_err = |reason: String| Error::bundle(name.clone(), format!("frame {}: {reason}", rec.frame_id));
            rec.intrinsics.validate().map_err(frame_err)?;
            let mut files = vec![&rec.depth, &rec.semantic_mask, &rec.instance_mask];
            files.extend(rec.rgb.as_ref());
            for f in files {
                if !dir.join(f).is_file() {
                    return Err(frame_err(format!("{f} is missing")));
                }
            }
            let expected = (rec.intrinsics.width * rec.intrinsics.height * 4) as u64;
            let actual = fs::metadata(dir.join(&rec.depth))?.len();
            if actual != expected {
                return Err(frame_err(format!(
                    "depth file {} has {actual} bytes, expected {expected} for {}x{}",
                    rec.depth, rec.intrinsics.width, rec.intrinsics.height
                )));
            }
            frames.push(rec);
        }
        let mut ids: Vec<u32> = frames.iter().map(|f| f.frame_id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::bundle(MANIFEST_FILE, "field frames: duplicate frame ids"));
        }
        Ok(Self {
            root: root.to_path_buf(),
            manifest,
            frames,
        })
    }

    pub fn derived_dir(&self) -> PathBuf {
        self.root.join(DERIVED_DIR)
    }

    pub fn point_cloud_path(&self) -> PathBuf {
        self.root.join(&self.manifest.point_cloud)
    }

    pub fn load_point_cloud(&self) -> Result<PointCloud> {
        read_ply(&self.point_cloud_path()).map_err(|e| match e {
            e @ Error::Bundle { .. } => e,
            other => Error::bundle(self.manifest.point_cloud.clone(), other.to_string()),
        })
    }

    fn frame_dir(&self, i: usize) -> PathBuf {
        self.root.join(&self.manifest.frames[i]).parent().map(Path::to_path_buf).unwrap_or_else(|| self.root.clone())
    }

    pub fn load_frame(&self, i: usize) -> Result<CameraFrame> {
        let rec = &self.frames[i];
        let dir = self.frame_dir(i);
        let name = &self.manifest.frames[i];
        let fail = |reason: String| Error::bundle(name.clone(), format!("frame {}: {reason}", rec.frame_id));
        let (w, h) = (rec.intrinsics.width, rec.intrinsics.height);
        let depth = read_depth(&dir.join(&rec.depth), w, h).map_err(|e| fail(e.to_string()))?;
        let semantic_mask = read_mask(&dir.join(&rec.semantic_mask)).map_err(|e| fail(e.to_string()))?;
        let instance_mask = read_mask(&dir.join(&rec.instance_mask)).map_err(|e| fail(e.to_string()))?;
        let rgb = match &rec.rgb {
            Some(f) => Some(image::open(dir.join(f)).map_err(|e| fail(e.to_string()))?.to_rgb8()),
            None => None,
        };
        let frame = CameraFrame {
            frame_id: rec.frame_id,
            intrinsics: rec.intrinsics,
            pose: rec.pose,
            depth,
            semantic_mask,
            instance_mask,
            rgb,
        };
        frame.validate().map_err(|e| fail(e.to_string()))?;
        if let Some(img) = &frame.rgb {
            if (img.width() as usize, img.height() as usize) != (w, h) {
                return Err(fail(format!("rgb image is {}x{}, expected {w}x{h}", img.width(), img.height())));
            }
        }
        Ok(frame)
    }

    pub fn load_frames(&self) -> Result<Vec<CameraFrame>> {
        (0..self.frames.len()).into_par_iter().map(|i| self.load_frame(i)).collect()
    }
}

// ---------------------------------------------------------------------------
// File formats

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let bytes: Vec<u8> = depth.data().iter().flat_map(|d| d.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_depth(path: &Path, width: usize, height: usize) -> Result<DepthMap> {
    let bytes = fs::read(path)?;
    if bytes.len() != width * height * 4 {
        return Err(Error::bundle(
            path.display().to_string(),
            format!("{} bytes, expected {}", bytes.len(), width * height * 4),
        ));
    }
    let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Raster::from_vec(width, height, data)
}

pub fn write_mask(path: &Path, mask: &LabelMap) -> Result<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(w, h, mask.data().to_vec()).expect("raster length matches its shape");
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn read_mask(path: &Path) -> Result<LabelMap> {
    let (w, h, data) = match image::open(path)? {
        image::DynamicImage::ImageLuma16(m) => (m.width(), m.height(), m.into_raw()),
        image::DynamicImage::ImageLuma8(m) => (m.width(), m.height(), m.into_raw().into_iter().map(u16::from).collect()),
        other => {
            return Err(Error::bundle(
                path.display().to_string(),
                format!("mask must be single-channel, found {:?}", other.color()),
            ))
        }
    };
    Raster::from_vec(w as usize, h as usize, data)
}

pub fn write_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut ply = Ply::<DefaultElement>::new();
    ply.header.encoding = Encoding::BinaryLittleEndian;
    let mut vertex = ElementDef::new("vertex".into());
    for name in ["x", "y", "z"] {
        vertex.properties.add(PropertyDef::new(name.into(), PropertyType::Scalar(ScalarType::Float)));
    }
    if cloud.colors().is_some() {
        for name in ["red", "green", "blue"] {
            vertex.properties.add(PropertyDef::new(name.into(), PropertyType::Scalar(ScalarType::UChar)));
        }
    }
    ply.header.elements.add(vertex);
    let mut elements = Vec::with_capacity(cloud.len());
    for (i, p) in cloud.points().iter().enumerate() {
        let mut e = DefaultElement::new();
        e.insert("x".into(), Property::Float(p.x as f32));
        e.insert("y".into(), Property::Float(p.y as f32));
        e.insert("z".into(), Property::Float(p.z as f32));
        if let Some(colors) = cloud.colors() {
            let [r, g, b] = colors[i];
            e.insert("red".into(), Property::UChar(r));
            e.insert("green".into(), Property::UChar(g));
            e.insert("blue".into(), Property::UChar(b));
        }
        elements.push(e);
    }
    ply.payload.insert("vertex".into(), elements);
    let mut out = BufWriter::new(fs::File::create(path)?);
    Writer::new()
        .write_ply(&mut out, &mut ply)
        .map_err(|e| Error::bundle(path.display().to_string(), e.to_string()))?;
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud> {
    let name = path.display().to_string();
    let mut reader = BufReader::new(fs::File::open(path).map_err(|e| Error::bundle(name.clone(), e.to_string()))?);
    let ply = Parser::<DefaultElement>::new()
        .read_ply(&mut reader)
        .map_err(|e| Error::bundle(name.clone(), e.to_string()))?;
    let vertices = ply
        .payload
        .get("vertex")
        .ok_or_else(|| Error::bundle(name.clone(), "no vertex element"))?;
    let float = |e: &KeyMap<Property>, k: &str| -> Result<f64> {
        match e.get(k) {
            Some(Property::Float(v)) => Ok(*v as f64),
            Some(Property::Double(v)) => Ok(*v),
            _ => Err(Error::bundle(name.clone(), format!("vertex property {k} missing or not a float"))),
        }
    };
    let has_color = vertices.first().is_some_and(|e| e.contains_key("red"));
    let mut points = Vec::with_capacity(vertices.len());
    let mut colors = Vec::new();
    for e in vertices {
        points.push(Point3::new(float(e, "x")?, float(e, "y")?, float(e, "z")?));
        if has_color {
            let mut c = [0u8; 3];
            for (slot, k) in c.iter_mut().zip(["red", "green", "blue"]) {
                *slot = match e.get(k) {
                    Some(Property::UChar(v)) => *v,
                    _ => return Err(Error::bundle(name.clone(), format!("vertex property {k} missing or not uchar"))),
                };
            }
            colors.push(c);
        }
    }
    if has_color {
        PointCloud::with_colors(points, colors)
    } else {
        PointCloud::new(points)
    }
}

/// Frame-file base name used by [`write_bundle`].
pub fn frame_stem(frame_id: u32) -> String {
    format!("{frame_id:04}")
}

/// Writes a complete bundle. Output is a pure function of the inputs.
pub fn write_bundle(
    root: &Path,
    scene_id: &str,
    semantic_classes: &BTreeMap<u16, String>,
    cloud: &PointCloud,
    frames: &[CameraFrame],
) -> Result<SceneBundle> {
    fs::create_dir_all(root.join("frames"))?;
    write_ply(&root.join("points.ply"), cloud)?;
    let records: Vec<(String, FrameRecord)> = frames
        .par_iter()
        .map(|f| {
            let stem = frame_stem(f.frame_id);
            let dir = root.join("frames");
            let rec = FrameRecord {
                frame_id: f.frame_id,
                intrinsics: f.intrinsics,
                pose: f.pose,
                depth: format!("{stem}.depth"),
                semantic_mask: format!("{stem}_semantic.png"),
                instance_mask: format!("{stem}_instance.png"),
                rgb: f.rgb.as_ref().map(|_| format!("{stem}_rgb.png")),
            };
            write_depth(&dir.join(&rec.depth), &f.depth)?;
            write_mask(&dir.join(&rec.semantic_mask), &f.semantic_mask)?;
            write_mask(&dir.join(&rec.instance_mask), &f.instance_mask)?;
            if let (Some(img), Some(file)) = (&f.rgb, &rec.rgb) {
                write_rgb(&dir.join(file), img)?;
            }
            let name = format!("frames/{stem}.json");
            fs::write(root.join(&name), serde_json::to_string_pretty(&rec)? + "\n")?;
            Ok((name, rec))
        })
        .collect::<Result<_>>()?;
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        scene_id: scene_id.into(),
        convention: Convention::default(),
        semantic_classes: semantic_classes.clone(),
        point_cloud: "points.ply".into(),
        frames: records.iter().map(|(n, _)| n.clone()).collect(),
    };
    fs::write(root.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(SceneBundle {
        root: root.to_path_buf(),
        manifest,
        frames: records.into_iter().map(|(_, r)| r).collect(),
    })
}
