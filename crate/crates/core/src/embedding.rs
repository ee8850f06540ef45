//! Object and node-document embeddings with exact cosine search.
//!
//! Each object gets an image-side vector (mean of crop embeddings over its
//! best views and three crop scales) and a doc-side vector (embedding of a
//! rendered text document describing the node). Search is a full scan:
//! scenes hold hundreds of objects at most, so exactness is free.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{enlarge_box, min_area_bbox_2d, visible_projection, CameraFrame, DepthTolerance, Point3};
use crate::imaging::{crop_box, dominant_palette_color};
use crate::scene_graph::{SceneGraph3D, SceneObject};

pub const CROP_SCALES: [f64; 3] = [1.0, 1.2, 1.4];

pub trait EmbeddingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;
    fn embed_image(&self, crop: &RgbImage) -> Result<Vec<f32>>;
    fn embed_text(&self, text: &str) -> Result<Vec<f32>>;
}

/// L2-normalizes in double precision. A zero vector stays zero.
pub fn normalize(v: &[f64]) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| (x / n) as f32).collect()
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum())
}

fn check_dimension(v: Vec<f32>, dimension: usize) -> Result<Vec<f32>> {
    if v.len() != dimension {
        return Err(Error::DimensionMismatch {
            expected: dimension,
            actual: v.len(),
        });
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Fixture provider

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaletteTerms {
    pub rgb: [u8; 3],
    /// Words describing what a crop dominated by this color shows.
    pub terms: String,
}

/// Keyword vocabulary: every synonym group is one orthogonal axis, and one
/// trailing axis collects text that matches no group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub groups: Vec<Vec<String>>,
    #[serde(default)]
    pub palette: Vec<PaletteTerms>,
}

/// Deterministic pseudo-embeddings from a [`Vocabulary`].
///
/// Text embeds as the normalized sum of the axes of its words (a trailing
/// "s" is stripped for lookup when the plain word is unknown). Images embed
/// as the text of the dominant palette color in the crop.
#[derive(Debug, Clone)]
pub struct VocabularyEmbedder {
    vocab: Vocabulary,
    axis_of: BTreeMap<String, usize>,
    palette: Vec<[u8; 3]>,
}

impl VocabularyEmbedder {
    pub fn new(vocab: Vocabulary) -> Result<Self> {
        let mut axis_of = BTreeMap::new();
        for (axis, group) in vocab.groups.iter().enumerate() {
            for word in group {
                let w = word.trim().to_lowercase();
                if let Some(prev) = axis_of.insert(w.clone(), axis) {
                    if prev != axis {
                        return Err(Error::InvalidParameter(format!("word \"{w}\" appears in two vocabulary groups")));
                    }
                }
            }
        }
        let palette = vocab.palette.iter().map(|p| p.rgb).collect();
        Ok(Self { vocab, axis_of, palette })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::new(serde_json::from_str(&text)?)
    }

    fn unknown_axis(&self) -> usize {
        self.vocab.groups.len()
    }

    fn lookup(&self, word: &str) -> Option<usize> {
        self.axis_of
            .get(word)
            .or_else(|| word.strip_suffix('s').and_then(|w| self.axis_of.get(w)))
            .copied()
    }
}

impl EmbeddingProvider for VocabularyEmbedder {
    fn name(&self) -> &str {
        "vocabulary-fixture"
    }

    fn dimension(&self) -> usize {
        self.vocab.groups.len() + 1
    }

    fn embed_text(&self, text: &str) -> Result<Vec<f32>> {
        let mut v = vec![0.0f64; self.dimension()];
        let mut any = false;
        for word in text.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()) {
            if let Some(axis) = self.lookup(&word.to_lowercase()) {
                v[axis] += 1.0;
                any = true;
            }
        }
        if !any {
            v[self.unknown_axis()] = 1.0;
        }
        Ok(normalize(&v))
    }

    fn embed_image(&self, crop: &RgbImage) -> Result<Vec<f32>> {
        match dominant_palette_color(crop, &self.palette) {
            Some(rgb) => {
                let entry = self.vocab.palette.iter().find(|p| p.rgb == rgb).expect("palette from vocabulary");
                self.embed_text(&entry.terms)
            }
            None => {
                let mut v = vec![0.0; self.dimension()];
                v[self.unknown_axis()] = 1.0;
                Ok(normalize(&v))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// View selection and object embeddings

/// A selected view with the pixel positions of the object's visible points.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectView {
    pub frame_index: usize,
    pub frame_id: u32,
    pub pixels: Vec<(f64, f64)>,
}

/// Top-`k` views by number of depth-consistent object points, ties to the
/// smaller frame id. Returned in rank order.
pub fn select_views(
    object_id: u32,
    points: &[Point3],
    frames: &[CameraFrame],
    k: usize,
    tol: &DepthTolerance,
) -> Result<Vec<ObjectView>> {
    if k == 0 {
        return Err(Error::InvalidParameter("view count k must be at least 1".into()));
    }
    let mut views: Vec<ObjectView> = frames
        .par_iter()
        .enumerate()
        .map(|(frame_index, frame)| ObjectView {
            frame_index,
            frame_id: frame.frame_id,
            pixels: points
                .iter()
                .filter_map(|p| visible_projection(p, frame, tol))
                .map(|pr| (pr.u, pr.v))
                .collect(),
        })
        .filter(|v| !v.pixels.is_empty())
        .collect();
    if views.is_empty() {
        return Err(Error::NoVisibleViews(object_id));
    }
    views.sort_by(|a, b| b.pixels.len().cmp(&a.pixels.len()).then(a.frame_id.cmp(&b.frame_id)));
    views.truncate(k);
    Ok(views)
}

/// Crops of one view at every scale in [`CROP_SCALES`].
pub fn view_crops(view: &ObjectView, frame: &CameraFrame) -> Result<Vec<RgbImage>> {
    let rgb = frame.rgb.as_ref().ok_or_else(|| Error::InvalidFrame {
        frame_id: frame.frame_id,
        reason: "frame has no RGB image".into(),
    })?;
    let base = min_area_bbox_2d(&view.pixels)?;
    CROP_SCALES
        .iter()
        .map(|&s| Ok(crop_box(rgb, &enlarge_box(&base, s)?)))
        .collect()
}

/// Mean of all crop embeddings over the selected views, then normalized.
pub fn embed_views(views: &[ObjectView], frames: &[CameraFrame], provider: &dyn EmbeddingProvider) -> Result<Vec<f32>> {
    let dim = provider.dimension();
    let mut ordered: Vec<&ObjectView> = views.iter().collect();
    ordered.sort_by_key(|v| v.frame_id);
    let mut sum = vec![0.0f64; dim];
    for view in ordered {
        for crop in view_crops(view, &frames[view.frame_index])? {
            let e = check_dimension(provider.embed_image(&crop)?, dim)?;
            for (s, x) in sum.iter_mut().zip(&e) {
                *s += *x as f64;
            }
        }
    }
    Ok(normalize(&sum))
}

pub fn build_object_embedding(
    object: &SceneObject,
    points: &[Point3],
    frames: &[CameraFrame],
    provider: &dyn EmbeddingProvider,
    k: usize,
    tol: &DepthTolerance,
) -> Result<Vec<f32>> {
    let views = select_views(object.object_id, points, frames, k, tol)?;
    embed_views(&views, frames, provider)
}

fn fmt3(p: &Point3) -> String {
    format!("({:.2}, {:.2}, {:.2})", p.x, p.y, p.z)
}

/// Text document for a scene-graph node: class, attributes, caption and
/// geometry, in a fixed template.
pub fn build_node_document(node: &SceneObject) -> String {
    let mut lines = vec![format!("object: {}", node.class)];
    for (key, value) in node.attributes.present() {
        if key != "type" || value != node.class {
            lines.push(format!("{key}: {value}"));
        }
    }
    if !node.caption.trim().is_empty() {
        lines.push(format!("caption: {}", node.caption.trim()));
    }
    lines.push(format!("centroid {}", fmt3(&node.centroid)));
    lines.push(format!("extents {}", fmt3(&node.aabb.extents())));
    lines.join("\n")
}

// ---------------------------------------------------------------------------
// Index

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexSide {
    Image,
    Doc,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingIndex {
    pub provider: String,
    pub dimension: usize,
    pub image: BTreeMap<u32, Vec<f32>>,
    pub doc: BTreeMap<u32, Vec<f32>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub top_k: usize,
    pub threshold: f64,
    /// Entries within this much of the best score are kept beyond `top_k`.
    pub band: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredId {
    pub object_id: u32,
    pub score: f64,
}

/// Ranking rule shared by every search path: score descending, id
/// ascending; keep `top_k` plus anything inside the band below the best;
/// drop scores under the threshold.
pub fn rank(mut scored: Vec<ScoredId>, params: &SearchParams) -> Vec<ScoredId> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.object_id.cmp(&b.object_id)));
    let Some(best) = scored.first().map(|s| s.score) else {
        return scored;
    };
    let in_band = scored.iter().take_while(|s| s.score >= best - params.band).count();
    scored.truncate(params.top_k.max(in_band));
    scored.retain(|s| s.score >= params.threshold);
    scored
}

impl EmbeddingIndex {
    pub fn new(provider: &str, dimension: usize) -> Self {
        Self {
            provider: provider.into(),
            dimension,
            ..Default::default()
        }
    }

    pub fn side(&self, side: IndexSide) -> &BTreeMap<u32, Vec<f32>> {
        match side {
            IndexSide::Image => &self.image,
            IndexSide::Doc => &self.doc,
        }
    }

    pub fn insert(&mut self, side: IndexSide, object_id: u32, vector: Vec<f32>) -> Result<()> {
        let v = check_dimension(vector, self.dimension)?;
        match side {
            IndexSide::Image => self.image.insert(object_id, v),
            IndexSide::Doc => self.doc.insert(object_id, v),
        };
        Ok(())
    }

    pub fn search_vector(&self, query: &[f32], side: IndexSide, params: &SearchParams) -> Result<Vec<ScoredId>> {
        let entries = self.side(side);
        if entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let scored = entries
            .iter()
            .map(|(&object_id, v)| Ok(ScoredId { object_id, score: cosine_similarity(query, v)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(rank(scored, params))
    }

    /// Every id in the index must be a node of `graph`.
    pub fn check_against(&self, graph: &SceneGraph3D) -> Result<()> {
        for id in self.image.keys().chain(self.doc.keys()) {
            if !graph.nodes.contains_key(id) {
                return Err(Error::IdMismatch(format!("index entry {id} is not in the scene graph")));
            }
        }
        Ok(())
    }
}

pub fn query_index(
    text: &str,
    index: &EmbeddingIndex,
    side: IndexSide,
    params: &SearchParams,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<ScoredId>> {
    if index.side(side).is_empty() {
        return Err(Error::EmptyIndex);
    }
    let q = check_dimension(provider.embed_text(text)?, index.dimension)?;
    index.search_vector(&q, side, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IndexConfig {
    pub views_per_object: usize,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self { views_per_object: 10 }
    }
}

/// Builds both sides for every graph node. Objects with no visible view get
/// no image-side vector and a warning; their doc-side vector is still built.
pub fn build_index(
    graph: &SceneGraph3D,
    cloud_points: &[Point3],
    frames: &[CameraFrame],
    provider: &dyn EmbeddingProvider,
    config: &IndexConfig,
    tol: &DepthTolerance,
) -> Result<(EmbeddingIndex, Vec<String>)> {
    let nodes: Vec<&SceneObject> = graph.nodes.values().collect();
    type Built = (u32, Result<Vec<f32>>, Result<Vec<f32>>);
    let built: Vec<Built> = nodes
        .par_iter()
        .map(|node| {
            let points: Vec<Point3> = node.point_indices.iter().map(|&i| cloud_points[i]).collect();
            let image = build_object_embedding(node, &points, frames, provider, config.views_per_object, tol);
            let doc = provider.embed_text(&build_node_document(node));
            (node.object_id, image, doc)
        })
        .collect();
    let mut index = EmbeddingIndex::new(provider.name(), provider.dimension());
    let mut warnings = Vec::new();
    for (id, image, doc) in built {
        match image {
            Ok(v) => index.insert(IndexSide::Image, id, v)?,
            Err(e @ Error::NoVisibleViews(_)) => warnings.push(format!("object {id}: {e}")),
            Err(e) => return Err(e),
        }
        index.insert(IndexSide::Doc, id, doc?)?;
    }
    Ok((index, warnings))
}

// ---------------------------------------------------------------------------
// Persistence

const MAGIC: &[u8; 4] = b"QSRE";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    provider: String,
    dimension: usize,
    image_ids: Vec<u32>,
    doc_ids: Vec<u32>,
    /// Reserved for approximate-search metadata; always null for exact search.
    ann: Option<serde_json::Value>,
}

impl EmbeddingIndex {
    /// `QSRE`, u32 version, u32 header length, JSON header, then image rows
    /// and doc rows as little-endian f32 in header id order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = IndexHeader {
            provider: self.provider.clone(),
            dimension: self.dimension,
            image_ids: self.image.keys().copied().collect(),
            doc_ids: self.doc.keys().copied().collect(),
            ann: None,
        };
        let h = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(12 + h.len() + 4 * self.dimension * (self.image.len() + self.doc.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(h.len() as u32).to_le_bytes());
        out.extend_from_slice(&h);
        for v in self.image.values().chain(self.doc.values()) {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let fail = |m: &str| Error::IndexFormat(m.to_string());
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(fail("missing QSRE magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::IndexFormat(format!("unsupported index version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes.get(12..12 + hlen).ok_or_else(|| fail("truncated header"))?;
        let header: IndexHeader = serde_json::from_slice(body).map_err(|e| Error::IndexFormat(e.to_string()))?;
        let rows = header.image_ids.len() + header.doc_ids.len();
        let data = &bytes[12 + hlen..];
        if header.dimension == 0 || data.len() != rows * header.dimension * 4 {
            return Err(Error::IndexFormat(format!(
                "expected {} vector bytes, found {}",
                rows * header.dimension * 4,
                data.len()
            )));
        }
        let mut floats = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut read_side = |ids: &[u32]| -> Result<BTreeMap<u32, Vec<f32>>> {
            let mut side = BTreeMap::new();
            for &id in ids {
                let v: Vec<f32> = floats.by_ref().take(header.dimension).collect();
                let norm = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-5 {
                    return Err(Error::IndexFormat(format!("vector for object {id} is not unit length")));
                }
                if side.insert(id, v).is_some() {
                    return Err(Error::IndexFormat(format!("duplicate id {id}")));
                }
            }
            Ok(side)
        };
        let image = read_side(&header.image_ids)?;
        let doc = read_side(&header.doc_ids)?;
        Ok(Self {
            provider: header.provider,
            dimension: header.dimension,
            image,
            doc,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
