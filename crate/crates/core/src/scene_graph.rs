//! Attributed 3D scene graph: frame-level relation graphs, aggregation,
//! metric edge pruning, canonical serialization and consolidation against a
//! fresh observation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::{quantize, value_to_canonical_string};
use crate::captions::{CaptionRecord, ObjectAttributes};
use crate::error::{Error, Result};
use crate::geometry::{aabb_of, centroid_of, Aabb3, Point3, PointCloud};
use crate::lifting::InstanceLabeling;

pub const GRAPH_FORMAT: &str = "qsr-scene-graph";
pub const GRAPH_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub object_id: u32,
    pub class: String,
    pub caption: String,
    pub attributes: ObjectAttributes,
    pub centroid: Point3,
    pub aabb: Aabb3,
    pub point_indices: Vec<usize>,
}

impl SceneObject {
    pub fn summary(&self) -> ObjectSummary {
        ObjectSummary {
            object_id: self.object_id,
            class: self.class.clone(),
            centroid: self.centroid,
            aabb: self.aabb,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationEdge {
    pub src: u32,
    pub dst: u32,
    pub relation: String,
    pub support: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameGraph {
    pub frame_id: u32,
    pub nodes: Vec<u32>,
    pub edges: Vec<RelationEdge>,
}

/// What a relation provider gets to see about each object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSummary {
    pub object_id: u32,
    pub class: String,
    pub centroid: Point3,
    pub aabb: Aabb3,
}

pub trait RelationProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Relation of `a` relative to `b`, or `None` when unrelated.
    fn relate(&self, a: &ObjectSummary, b: &ObjectSummary) -> Result<Option<String>>;
}

/// Offline relation provider from AABB geometry.
///
/// With overlapping xy footprints, `a` is "on top of" `b` when its bottom is
/// within `contact_tol` of `b`'s top, "above" when it is higher still, and
/// "below" in the mirrored cases. Otherwise objects whose footprints are at
/// most `next_to_gap` apart are "next to" each other.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricRelationProvider {
    pub contact_tol: f64,
    pub next_to_gap: f64,
}

impl Default for GeometricRelationProvider {
    fn default() -> Self {
        Self {
            contact_tol: 0.05,
            next_to_gap: 0.5,
        }
    }
}

fn footprint_gap(a: &Aabb3, b: &Aabb3) -> f64 {
    let dx = (b.min.x - a.max.x).max(a.min.x - b.max.x).max(0.0);
    let dy = (b.min.y - a.max.y).max(a.min.y - b.max.y).max(0.0);
    (dx * dx + dy * dy).sqrt()
}

fn footprints_overlap(a: &Aabb3, b: &Aabb3) -> bool {
    a.min.x < b.max.x && b.min.x < a.max.x && a.min.y < b.max.y && b.min.y < a.max.y
}

impl GeometricRelationProvider {
    pub fn relation(&self, a: &Aabb3, b: &Aabb3) -> Option<&'static str> {
        if footprints_overlap(a, b) {
            if (a.min.z - b.max.z).abs() <= self.contact_tol {
                return Some("on top of");
            }
            if a.min.z > b.max.z {
                return Some("above");
            }
            if (b.min.z - a.max.z).abs() <= self.contact_tol || b.min.z > a.max.z {
                return Some("below");
            }
        }
        (footprint_gap(a, b) <= self.next_to_gap).then_some("next to")
    }
}

impl RelationProvider for GeometricRelationProvider {
    fn name(&self) -> &str {
        "geometric"
    }

    fn relate(&self, a: &ObjectSummary, b: &ObjectSummary) -> Result<Option<String>> {
        Ok(self.relation(&a.aabb, &b.aabb).map(str::to_string))
    }
}

/// Relation graph for one frame. Only ordered pairs whose centroids are
/// within `pair_radius` reach the provider; provider failures skip the pair
/// and are reported as warnings.
pub fn build_frame_graph(
    frame_id: u32,
    objects: &[ObjectSummary],
    provider: &dyn RelationProvider,
    pair_radius: f64,
) -> (FrameGraph, Vec<String>) {
    let mut sorted: Vec<&ObjectSummary> = objects.iter().collect();
    sorted.sort_by_key(|o| o.object_id);
    sorted.dedup_by_key(|o| o.object_id);
    let mut edges = Vec::new();
    let mut warnings = Vec::new();
    for a in &sorted {
        for b in &sorted {
            if a.object_id == b.object_id || a.centroid.distance(&b.centroid) > pair_radius {
                continue;
            }
            match provider.relate(a, b) {
                Ok(Some(rel)) if !rel.trim().is_empty() && !rel.trim().eq_ignore_ascii_case("none") => {
                    edges.push(RelationEdge {
                        src: a.object_id,
                        dst: b.object_id,
                        relation: rel.trim().to_lowercase(),
                        support: 1,
                    })
                }
                Ok(_) => {}
                Err(e) => warnings.push(format!("frame {frame_id}: pair ({}, {}) skipped: {e}", a.object_id, b.object_id)),
            }
        }
    }
    (
        FrameGraph {
            frame_id,
            nodes: sorted.iter().map(|o| o.object_id).collect(),
            edges,
        },
        warnings,
    )
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SceneGraph3D {
    pub nodes: BTreeMap<u32, SceneObject>,
    /// Sorted by `(src, dst, relation)`.
    pub edges: Vec<RelationEdge>,
}

fn quantize_point(p: Point3) -> Point3 {
    Point3::new(quantize(p.x), quantize(p.y), quantize(p.z))
}

/// Sums support of identical triples and keeps one relation per ordered pair:
/// highest support, then lexicographically smallest relation.
pub fn merge_edges(edges: impl IntoIterator<Item = RelationEdge>) -> Vec<RelationEdge> {
    let mut support: BTreeMap<(u32, u32, String), u32> = BTreeMap::new();
    for e in edges {
        *support.entry((e.src, e.dst, e.relation)).or_default() += e.support;
    }
    let mut best: BTreeMap<(u32, u32), (String, u32)> = BTreeMap::new();
    for ((src, dst, rel), s) in support {
        match best.get(&(src, dst)) {
            Some((_, bs)) if *bs >= s => {}
            _ => {
                best.insert((src, dst), (rel, s));
            }
        }
    }
    best.into_iter()
        .map(|((src, dst), (relation, support))| RelationEdge {
            src,
            dst,
            relation,
            support,
        })
        .collect()
}

/// Scene object geometry from its member points, on the canonical grid.
pub fn object_geometry(cloud: &PointCloud, indices: &[usize]) -> Result<(Point3, Aabb3)> {
    let pts: Vec<Point3> = indices.iter().map(|&i| cloud.get(i)).collect();
    let centroid = quantize_point(centroid_of(&pts)?);
    let aabb = aabb_of(&pts)?;
    Ok((
        centroid,
        Aabb3 {
            min: quantize_point(aabb.min),
            max: quantize_point(aabb.max),
        },
    ))
}

/// One node per labeled instance, with geometry from its refined points and
/// class/caption from the caption records (panoptic class when absent).
pub fn aggregate_graphs(
    frame_graphs: &[FrameGraph],
    labeling: &InstanceLabeling,
    cloud: &PointCloud,
    captions: &BTreeMap<u32, CaptionRecord>,
) -> Result<SceneGraph3D> {
    if labeling.len() != cloud.len() {
        return Err(Error::IdMismatch(format!(
            "labeling covers {} points, cloud has {}",
            labeling.len(),
            cloud.len()
        )));
    }
    let members = labeling.members();
    if let Some(id) = captions.keys().find(|id| !members.contains_key(id)) {
        return Err(Error::IdMismatch(format!("caption for object {id} which has no points")));
    }
    let mut nodes = BTreeMap::new();
    for (&id, indices) in &members {
        let (centroid, aabb) = object_geometry(cloud, indices)?;
        let panoptic = labeling.class_name(id);
        let (class, caption, attributes) = match captions.get(&id) {
            Some(rec) => (rec.refined_class.clone(), rec.unified_caption.clone(), rec.attributes.clone()),
            None => (panoptic.to_string(), String::new(), ObjectAttributes::only_type(panoptic)),
        };
        nodes.insert(
            id,
            SceneObject {
                object_id: id,
                class,
                caption,
                attributes,
                centroid,
                aabb,
                point_indices: indices.clone(),
            },
        );
    }
    let mut all_edges = Vec::new();
    for fg in frame_graphs {
        for e in &fg.edges {
            if !nodes.contains_key(&e.src) || !nodes.contains_key(&e.dst) {
                return Err(Error::IdMismatch(format!(
                    "frame {} edge ({}, {}) references an object without points",
                    fg.frame_id, e.src, e.dst
                )));
            }
            all_edges.push(e.clone());
        }
    }
    Ok(SceneGraph3D {
        nodes,
        edges: merge_edges(all_edges),
    })
}

/// Keeps edges whose endpoint centroids are at most `max_dist` apart.
pub fn prune_edges(graph: &SceneGraph3D, max_dist: f64) -> Result<SceneGraph3D> {
    if !(max_dist > 0.0) {
        return Err(Error::InvalidParameter(format!("prune distance {max_dist} must be positive")));
    }
    let edges = graph
        .edges
        .iter()
        .filter(|e| {
            let (a, b) = (&graph.nodes[&e.src], &graph.nodes[&e.dst]);
            a.centroid.distance(&b.centroid) <= max_dist
        })
        .cloned()
        .collect();
    Ok(SceneGraph3D {
        nodes: graph.nodes.clone(),
        edges,
    })
}

#[derive(Serialize, Deserialize)]
struct GraphMetadata {
    format: String,
    version: u64,
}

#[derive(Serialize, Deserialize)]
struct GraphDocument {
    metadata: GraphMetadata,
    nodes: BTreeMap<String, SceneObject>,
    edges: Vec<RelationEdge>,
}

impl SceneGraph3D {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (id, node) in &self.nodes {
            if node.object_id != *id {
                return Err(Error::GraphParse(format!("node key {id} holds object {}", node.object_id)));
            }
            if node.point_indices.is_empty() {
                return Err(Error::GraphParse(format!("node {id} has no points")));
            }
        }
        for e in &self.edges {
            if e.src == e.dst {
                return Err(Error::GraphParse(format!("self edge on {}", e.src)));
            }
            if e.support == 0 {
                return Err(Error::GraphParse(format!("edge ({}, {}) has zero support", e.src, e.dst)));
            }
            for end in [e.src, e.dst] {
                if !self.nodes.contains_key(&end) {
                    return Err(Error::GraphParse(format!("edge references missing node {end}")));
                }
            }
            if !seen.insert((e.src, e.dst, e.relation.as_str())) {
                return Err(Error::GraphParse(format!("duplicate edge ({}, {}, {})", e.src, e.dst, e.relation)));
            }
        }
        Ok(())
    }

    pub fn to_value(&self) -> Value {
        let doc = GraphDocument {
            metadata: GraphMetadata {
                format: GRAPH_FORMAT.into(),
                version: GRAPH_VERSION,
            },
            nodes: self.nodes.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_value(doc).expect("graph serializes")
    }

    /// Canonical JSON: sorted keys and node ids, six-decimal floats.
    pub fn to_canonical_json(&self) -> String {
        value_to_canonical_string(&self.to_value())
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let doc: GraphDocument = serde_json::from_value(value).map_err(|e| Error::GraphParse(e.to_string()))?;
        if doc.metadata.format != GRAPH_FORMAT || doc.metadata.version != GRAPH_VERSION {
            return Err(Error::GraphParse(format!(
                "unsupported graph format {} v{}",
                doc.metadata.format, doc.metadata.version
            )));
        }
        let mut nodes = BTreeMap::new();
        for (k, v) in doc.nodes {
            let id: u32 = k.parse().map_err(|_| Error::GraphParse(format!("node key \"{k}\" is not an id")))?;
            nodes.insert(id, v);
        }
        let mut edges = doc.edges;
        edges.sort();
        let g = SceneGraph3D { nodes, edges };
        g.validate()?;
        Ok(g)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::GraphParse(e.to_string()))?;
        Self::from_value(value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChangeKind {
    Added,
    Removed,
    Moved,
    Relabeled,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChangeDetail {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_centroid: Option<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_centroid: Option<Point3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub displacement: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub old_class: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_class: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneChange {
    pub kind: ChangeKind,
    /// Id in the updated graph (the prescan id for matched objects).
    pub object_id: u32,
    /// Id of the object in the observed graph, when it has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_id: Option<u32>,
    pub detail: ChangeDetail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConsolidationParams {
    /// Same-class objects closer than this are considered the same object.
    pub match_radius: f64,
    /// Matched objects displaced further than this are reported as moved.
    pub move_threshold: f64,
    /// Differently labeled objects closer than this are reported as relabeled.
    pub relabel_radius: f64,
}

impl Default for ConsolidationParams {
    fn default() -> Self {
        Self {
            match_radius: 0.5,
            move_threshold: 0.1,
            relabel_radius: 0.1,
        }
    }
}

fn greedy_match(
    prescanned: &SceneGraph3D,
    observed: &SceneGraph3D,
    taken_p: &mut BTreeSet<u32>,
    taken_o: &mut BTreeSet<u32>,
    radius: f64,
    same_class: bool,
) -> Vec<(u32, u32, f64)> {
    let mut pairs = Vec::new();
    for (pid, p) in &prescanned.nodes {
        if taken_p.contains(pid) {
            continue;
        }
        for (oid, o) in &observed.nodes {
            if taken_o.contains(oid) || p.class.eq_ignore_ascii_case(&o.class) != same_class {
                continue;
            }
            let d = p.centroid.distance(&o.centroid);
            if d <= radius {
                pairs.push((d, *pid, *oid));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut out = Vec::new();
    for (d, pid, oid) in pairs {
        if taken_p.contains(&pid) || taken_o.contains(&oid) {
            continue;
        }
        taken_p.insert(pid);
        taken_o.insert(oid);
        out.push((pid, oid, d));
    }
    out
}

/// Diffs a prescanned graph against a fresh observation.
///
/// Same-class objects are paired greedily by ascending centroid distance
/// within `match_radius`; leftover pairs of different class within
/// `relabel_radius` count as relabeled. The updated graph keeps prescan ids,
/// takes observed geometry for every match, keeps prescan captions unless
/// relabeled, and appends added objects with fresh ids.
pub fn consolidate(prescanned: &SceneGraph3D, observed: &SceneGraph3D, params: &ConsolidationParams) -> (SceneGraph3D, Vec<SceneChange>) {
    let mut taken_p = BTreeSet::new();
    let mut taken_o = BTreeSet::new();
    let matched = greedy_match(prescanned, observed, &mut taken_p, &mut taken_o, params.match_radius, true);
    let relabeled = greedy_match(prescanned, observed, &mut taken_p, &mut taken_o, params.relabel_radius, false);

    let mut changes = Vec::new();
    let mut nodes = BTreeMap::new();
    let mut id_map: BTreeMap<u32, u32> = BTreeMap::new();

    for &(pid, oid, d) in &matched {
        let (p, o) = (&prescanned.nodes[&pid], &observed.nodes[&oid]);
        id_map.insert(oid, pid);
        nodes.insert(
            pid,
            SceneObject {
                centroid: o.centroid,
                aabb: o.aabb,
                point_indices: o.point_indices.clone(),
                ..p.clone()
            },
        );
        if d > params.move_threshold {
            changes.push(SceneChange {
                kind: ChangeKind::Moved,
                object_id: pid,
                observed_id: Some(oid),
                detail: ChangeDetail {
                    old_centroid: Some(p.centroid),
                    new_centroid: Some(o.centroid),
                    displacement: Some(quantize(d)),
                    ..Default::default()
                },
            });
        }
    }
    for &(pid, oid, _) in &relabeled {
        let (p, o) = (&prescanned.nodes[&pid], &observed.nodes[&oid]);
        id_map.insert(oid, pid);
        nodes.insert(
            pid,
            SceneObject {
                object_id: pid,
                ..o.clone()
            },
        );
        changes.push(SceneChange {
            kind: ChangeKind::Relabeled,
            object_id: pid,
            observed_id: Some(oid),
            detail: ChangeDetail {
                old_class: Some(p.class.clone()),
                new_class: Some(o.class.clone()),
                ..Default::default()
            },
        });
    }
    for (pid, p) in &prescanned.nodes {
        if !taken_p.contains(pid) {
            changes.push(SceneChange {
                kind: ChangeKind::Removed,
                object_id: *pid,
                observed_id: None,
                detail: ChangeDetail {
                    old_centroid: Some(p.centroid),
                    old_class: Some(p.class.clone()),
                    ..Default::default()
                },
            });
        }
    }
    let mut next_id = prescanned.nodes.keys().next_back().map_or(0, |k| k + 1);
    for (oid, o) in &observed.nodes {
        if taken_o.contains(oid) {
            continue;
        }
        let nid = next_id;
        next_id += 1;
        id_map.insert(*oid, nid);
        nodes.insert(
            nid,
            SceneObject {
                object_id: nid,
                ..o.clone()
            },
        );
        changes.push(SceneChange {
            kind: ChangeKind::Added,
            object_id: nid,
            observed_id: Some(*oid),
            detail: ChangeDetail {
                new_centroid: Some(o.centroid),
                new_class: Some(o.class.clone()),
                ..Default::default()
            },
        });
    }
    changes.sort_by(|a, b| a.object_id.cmp(&b.object_id).then(a.kind.cmp(&b.kind)));

    // Observed relations take precedence for the pairs they cover.
    let observed_edges: Vec<RelationEdge> = observed
        .edges
        .iter()
        .map(|e| RelationEdge {
            src: id_map[&e.src],
            dst: id_map[&e.dst],
            ..e.clone()
        })
        .collect();
    let covered: BTreeSet<(u32, u32)> = observed_edges.iter().map(|e| (e.src, e.dst)).collect();
    let kept = prescanned
        .edges
        .iter()
        .filter(|e| nodes.contains_key(&e.src) && nodes.contains_key(&e.dst) && !covered.contains(&(e.src, e.dst)))
        .cloned();
    let edges = merge_edges(observed_edges.into_iter().chain(kept));
    (SceneGraph3D { nodes, edges }, changes)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::lifting::Provenance;
    use proptest::prelude::*;

    pub(crate) fn node(id: u32, class: &str, c: [f64; 3]) -> SceneObject {
        let centroid = Point3::from(c);
        let h = Point3::new(0.1, 0.1, 0.1);
        SceneObject {
            object_id: id,
            class: class.into(),
            caption: format!("a {class}"),
            attributes: ObjectAttributes::only_type(class),
            centroid,
            aabb: Aabb3 {
                min: quantize_point(centroid - h),
                max: quantize_point(centroid + h),
            },
            point_indices: vec![id as usize],
        }
    }

    pub(crate) fn graph(nodes: Vec<SceneObject>, edges: Vec<(u32, u32, &str)>) -> SceneGraph3D {
        SceneGraph3D {
            nodes: nodes.into_iter().map(|n| (n.object_id, n)).collect(),
            edges: merge_edges(edges.into_iter().map(|(s, d, r)| RelationEdge {
                src: s,
                dst: d,
                relation: r.into(),
                support: 1,
            })),
        }
    }

    struct Fixed(&'static str);
    impl RelationProvider for Fixed {
        fn name(&self) -> &str {
            "fixed"
        }
        fn relate(&self, _: &ObjectSummary, _: &ObjectSummary) -> Result<Option<String>> {
            match self.0 {
                "fail" => Err(Error::provider("offline")),
                r => Ok(Some(r.to_string())),
            }
        }
    }

    #[test]
    fn frame_graph_filters_pairs() {
        let a = node(1, "chair", [0.0, 0.0, 0.0]).summary();
        let b = node(2, "table", [0.5, 0.0, 0.0]).summary();
        let (g, w) = build_frame_graph(0, &[a.clone(), b.clone()], &Fixed("next to"), 1.5);
        assert_eq!(g.edges.len(), 2);
        assert!(w.is_empty());
        let far = node(3, "sofa", [3.0, 0.0, 0.0]).summary();
        let (g, _) = build_frame_graph(0, &[a.clone(), far], &Fixed("fail"), 1.5);
        assert!(g.edges.is_empty());
        let (g, _) = build_frame_graph(0, &[a.clone(), b.clone()], &Fixed("none"), 1.5);
        assert!(g.edges.is_empty());
        let (g, w) = build_frame_graph(0, &[a, b], &Fixed("fail"), 1.5);
        assert!(g.edges.is_empty());
        assert_eq!(w.len(), 2);
        assert_eq!(g.nodes, vec![1, 2]);
    }

    #[test]
    fn geometric_relations() {
        let p = GeometricRelationProvider::default();
        let bx = |min: [f64; 3], max: [f64; 3]| Aabb3 {
            min: min.into(),
            max: max.into(),
        };
        let table = bx([0.0, 0.0, 0.0], [1.0, 1.0, 0.7]);
        let vase = bx([0.4, 0.4, 0.7], [0.6, 0.6, 1.0]);
        assert_eq!(p.relation(&vase, &table), Some("on top of"));
        assert_eq!(p.relation(&table, &vase), Some("below"));
        let lamp = bx([0.4, 0.4, 1.5], [0.6, 0.6, 1.8]);
        assert_eq!(p.relation(&lamp, &table), Some("above"));
        let side = bx([1.3, 0.0, 0.0], [2.0, 1.0, 0.7]);
        assert_eq!(p.relation(&side, &table), Some("next to"));
        let far = bx([4.0, 0.0, 0.0], [5.0, 1.0, 0.7]);
        assert_eq!(p.relation(&far, &table), None);
    }

    #[test]
    fn edge_merging_rules() {
        let e = |s, d, r: &str, n| RelationEdge {
            src: s,
            dst: d,
            relation: r.into(),
            support: n,
        };
        let merged = merge_edges(vec![e(7, 9, "next to", 1), e(7, 9, "next to", 1), e(7, 9, "next to", 1)]);
        assert_eq!(merged, vec![e(7, 9, "next to", 3)]);
        let merged = merge_edges(vec![e(7, 9, "on", 1), e(7, 9, "near", 1), e(7, 9, "on", 1)]);
        assert_eq!(merged, vec![e(7, 9, "on", 2)]);
        let merged = merge_edges(vec![e(7, 9, "on", 1), e(7, 9, "near", 1)]);
        assert_eq!(merged, vec![e(7, 9, "near", 1)]);
    }

    fn labeled_cloud() -> (PointCloud, InstanceLabeling) {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(0.2, 0.0, 0.0),
            Point3::new(1.0, 1.0, 1.0),
            Point3::new(5.0, 5.0, 5.0),
        ];
        let cloud = PointCloud::new(pts).unwrap();
        let labels = vec![Some(7), Some(7), Some(9), None];
        let labeling = InstanceLabeling {
            num_instances: 10,
            provenance: labels
                .iter()
                .map(|l| if l.is_some() { Provenance::Voted } else { Provenance::Unlabeled })
                .collect(),
            labels,
            view_counts: vec![1; 4],
            class_of: [(7, "chair".to_string()), (9, "table".to_string())].into_iter().collect(),
        };
        (cloud, labeling)
    }

    #[test]
    fn aggregation_merges_nodes_and_edges() {
        let (cloud, labeling) = labeled_cloud();
        let fg = |f, rel: &str| FrameGraph {
            frame_id: f,
            nodes: vec![7, 9],
            edges: vec![RelationEdge {
                src: 7,
                dst: 9,
                relation: rel.into(),
                support: 1,
            }],
        };
        let frames = vec![fg(0, "next to"), fg(1, "next to"), fg(2, "next to")];
        let g = aggregate_graphs(&frames, &labeling, &cloud, &BTreeMap::new()).unwrap();
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[&7].centroid, Point3::new(0.1, 0.0, 0.0));
        assert_eq!(g.nodes[&7].class, "chair");
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].support, 3);

        let mut reversed = frames.clone();
        reversed.reverse();
        assert_eq!(aggregate_graphs(&reversed, &labeling, &cloud, &BTreeMap::new()).unwrap(), g);

        let stray = BTreeMap::from([(3, CaptionRecord::fallback(3, "x", "w"))]);
        assert!(matches!(
            aggregate_graphs(&frames, &labeling, &cloud, &stray),
            Err(Error::IdMismatch(_))
        ));
    }

    #[test]
    fn pruning_is_inclusive() {
        let g = graph(
            vec![
                node(1, "a", [0.0, 0.0, 0.0]),
                node(2, "b", [0.8, 0.0, 0.0]),
                node(3, "c", [1.2, 0.0, 0.0]),
                node(4, "d", [0.0, 1.0, 0.0]),
            ],
            vec![(1, 2, "near"), (1, 3, "near"), (1, 4, "near")],
        );
        let p = prune_edges(&g, 1.0).unwrap();
        let kept: Vec<(u32, u32)> = p.edges.iter().map(|e| (e.src, e.dst)).collect();
        assert_eq!(kept, vec![(1, 2), (1, 4)]);
        assert_eq!(prune_edges(&p, 1.0).unwrap(), p);
        assert!(prune_edges(&g, 0.0).is_err());
    }

    #[test]
    fn serialization_forms() {
        let empty = SceneGraph3D::default();
        let text = empty.to_canonical_json();
        assert_eq!(
            text,
            r#"{"edges":[],"metadata":{"format":"qsr-scene-graph","version":1},"nodes":{}}"#
        );
        let g = graph(
            vec![node(2, "vase", [0.5, 0.25, 1.0]), node(10, "table", [0.5, 0.25, 0.4]), node(3, "chair", [1.0, 0.0, 0.45])],
            vec![(2, 10, "on top of"), (3, 10, "next to")],
        );
        let text = g.to_canonical_json();
        assert!(text.find("\"2\":").unwrap() < text.find("\"10\":").unwrap());
        let back = SceneGraph3D::from_json(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_canonical_json(), text);

        let mut bad: Value = serde_json::from_str(&text).unwrap();
        bad["edges"][0]["dst"] = serde_json::json!(99);
        assert!(matches!(SceneGraph3D::from_value(bad), Err(Error::GraphParse(_))));
        assert!(matches!(SceneGraph3D::from_json("{}"), Err(Error::GraphParse(_))));
    }

    #[test]
    fn consolidation_cases() {
        let pre = graph(
            vec![
                node(1, "vase", [0.0, 0.0, 1.0]),
                node(2, "chair", [2.0, 0.0, 0.5]),
                node(3, "book", [1.0, 1.0, 0.8]),
            ],
            vec![(1, 2, "next to")],
        );
        let obs = graph(
            vec![
                node(10, "vase", [0.4, 0.0, 1.0]),
                node(11, "chair", [2.0, 0.0, 0.5]),
                node(12, "lamp", [5.0, 5.0, 1.0]),
            ],
            vec![],
        );
        let (updated, changes) = consolidate(&pre, &obs, &ConsolidationParams::default());
        let kinds: Vec<(ChangeKind, u32)> = changes.iter().map(|c| (c.kind, c.object_id)).collect();
        assert_eq!(
            kinds,
            vec![(ChangeKind::Moved, 1), (ChangeKind::Removed, 3), (ChangeKind::Added, 4)]
        );
        assert_eq!(updated.nodes[&1].centroid, Point3::new(0.4, 0.0, 1.0));
        assert_eq!(updated.nodes[&1].caption, "a vase");
        assert_eq!(updated.nodes[&4].class, "lamp");
        assert!(!updated.nodes.contains_key(&3));
        assert_eq!(updated.edges.len(), 1);

        let relabel = graph(vec![node(20, "pot", [0.0, 0.0, 1.0])], vec![]);
        let (_, ch) = consolidate(&graph(vec![node(1, "vase", [0.0, 0.0, 1.0])], vec![]), &relabel, &Default::default());
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].kind, ChangeKind::Relabeled);
        assert_eq!(ch[0].detail.new_class.as_deref(), Some("pot"));
    }

    fn arb_graph() -> impl Strategy<Value = SceneGraph3D> {
        prop::collection::vec((0..4usize, -3.0..3.0f64, -3.0..3.0f64, 0.0..2.0f64), 0..8).prop_flat_map(|specs| {
            let n = specs.len() as u32;
            let nodes: Vec<SceneObject> = specs
                .iter()
                .enumerate()
                .map(|(i, (c, x, y, z))| {
                    let class = ["chair", "table", "vase", "sofa"][*c];
                    node(i as u32, class, [quantize(*x), quantize(*y), quantize(*z)])
                })
                .collect();
            let edges = if n >= 2 {
                prop::collection::vec((0..n, 0..n, 0..3usize), 0..12).boxed()
            } else {
                Just(vec![]).boxed()
            };
            (Just(nodes), edges).prop_map(|(nodes, edges)| {
                let rels = ["near", "on top of", "next to"];
                let e: Vec<(u32, u32, &str)> = edges.into_iter().filter(|(s, d, _)| s != d).map(|(s, d, r)| (s, d, rels[r])).collect();
                graph(nodes, e)
            })
        })
    }

    proptest! {
        #[test]
        fn self_consolidation_is_silent(g in arb_graph(), theta in 0.001..1.0f64) {
            let params = ConsolidationParams { move_threshold: theta, ..Default::default() };
            let (updated, changes) = consolidate(&g, &g, &params);
            prop_assert!(changes.is_empty());
            prop_assert_eq!(updated, g);
        }

        #[test]
        fn pruning_idempotent_and_monotone(g in arb_graph(), d1 in 0.1..3.0f64, d2 in 0.1..3.0f64) {
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a = prune_edges(&g, lo).unwrap();
            let b = prune_edges(&g, hi).unwrap();
            prop_assert_eq!(&prune_edges(&a, lo).unwrap(), &a);
            for e in &a.edges {
                prop_assert!(b.edges.contains(e));
            }
        }

        #[test]
        fn canonical_round_trip(g in arb_graph()) {
            let text = g.to_canonical_json();
            let back = SceneGraph3D::from_json(&text).unwrap();
            prop_assert_eq!(back.to_canonical_json(), text);
            prop_assert_eq!(back, g);
        }
    }
}
