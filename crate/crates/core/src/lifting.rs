//! Lifting 2D panoptic masks onto a point cloud.
//!
//! Each point is projected into every frame; frames where the point passes
//! the depth-consistency check cast one vote for the instance id under the
//! projection. The majority vote becomes the point's label. Points that no
//! frame observes inherit labels from observed neighbors, and each instance
//! is then cleaned up by DBSCAN, keeping its largest cluster.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{visible_projection, CameraFrame, DepthTolerance, Point3, PointCloud, Raster};
use crate::spatial::NeighborGrid;

pub const UNKNOWN_CLASS: &str = "unknown";

pub type BinaryMask = Raster<bool>;

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::MaskShapeMismatch {
            expected: a.shape(),
            actual: b.shape(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 0.0 } else { inter as f64 / union as f64 })
}

/// Class whose semantic mask overlaps the instance mask best. Ties go to the
/// lexicographically smallest class; zero overlap yields `"unknown"`.
pub fn assign_semantic_class(instance_mask: &BinaryMask, semantic_masks: &BTreeMap<String, BinaryMask>) -> Result<String> {
    if semantic_masks.is_empty() {
        return Err(Error::NoSemanticMasks);
    }
    let mut scored = Vec::with_capacity(semantic_masks.len());
    for (class, mask) in semantic_masks {
        scored.push((class.as_str(), mask_iou(instance_mask, mask)?));
    }
    Ok(pick_best_class(scored.into_iter()))
}

fn pick_best_class<'a>(scored: impl Iterator<Item = (&'a str, f64)>) -> String {
    let mut best: Option<(&str, f64)> = None;
    for (class, iou) in scored {
        best = match best {
            Some((bc, bi)) if bi > iou || (bi == iou && bc <= class) => Some((bc, bi)),
            _ => Some((class, iou)),
        };
    }
    match best {
        Some((class, iou)) if iou > 0.0 => class.to_string(),
        _ => UNKNOWN_CLASS.to_string(),
    }
}

/// Per-point vote histograms `h_i`, stored sparsely as sorted `(id, count)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTable {
    pub num_instances: u32,
    rows: Vec<Vec<(u32, u32)>>,
    /// Number of frames in which each point passed the visibility check.
    pub view_counts: Vec<u32>,
}

impl VoteTable {
    pub fn empty(num_points: usize, num_instances: u32) -> Self {
        Self {
            num_instances,
            rows: vec![Vec::new(); num_points],
            view_counts: vec![0; num_points],
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn sparse_row(&self, i: usize) -> &[(u32, u32)] {
        &self.rows[i]
    }

    /// Dense `h_i` of length `num_instances`.
    pub fn row(&self, i: usize) -> Vec<u32> {
        let mut dense = vec![0; self.num_instances as usize];
        for &(k, c) in &self.rows[i] {
            dense[k as usize] = c;
        }
        dense
    }

    fn add_vote(&mut self, point: usize, id: u32) {
        let row = &mut self.rows[point];
        match row.binary_search_by_key(&id, |&(k, _)| k) {
            Ok(pos) => row[pos].1 += 1,
            Err(pos) => row.insert(pos, (id, 1)),
        }
    }

    /// Elementwise sum; both tables must cover the same points.
    pub fn merge(&mut self, other: &VoteTable) {
        assert_eq!(self.len(), other.len(), "vote tables cover different clouds");
        self.num_instances = self.num_instances.max(other.num_instances);
        for (i, row) in other.rows.iter().enumerate() {
            for &(k, c) in row {
                for _ in 0..c {
                    self.add_vote(i, k);
                }
            }
            self.view_counts[i] += other.view_counts[i];
        }
    }
}

/// Highest instance id present in any frame's instance mask, plus one.
pub fn instance_count(frames: &[CameraFrame]) -> u32 {
    frames
        .iter()
        .flat_map(|f| f.instance_mask.data().iter().copied())
        .max()
        .map(u32::from)
        .unwrap_or(0)
}

struct FrameVotes {
    visible: Vec<usize>,
    votes: Vec<(usize, u32)>,
}

fn frame_votes(points: &[Point3], frame: &CameraFrame, tol: &DepthTolerance) -> FrameVotes {
    let mut out = FrameVotes {
        visible: Vec::new(),
        votes: Vec::new(),
    };
    for (i, p) in points.iter().enumerate() {
        if let Some(proj) = visible_projection(p, frame, tol) {
            out.visible.push(i);
            let (x, y) = proj.pixel();
            let raw = frame.instance_mask.get(x, y);
            if raw > 0 {
                out.votes.push((i, u32::from(raw) - 1));
            }
        }
    }
    out
}

/// Vote histograms over `frames`. Frames are processed in parallel and merged
/// in input order.
pub fn accumulate_votes(cloud: &PointCloud, frames: &[CameraFrame], tol: &DepthTolerance) -> Result<VoteTable> {
    for f in frames {
        f.check_mask_shapes()?;
    }
    let num_instances = instance_count(frames);
    let per_frame: Vec<FrameVotes> = frames.par_iter().map(|f| frame_votes(cloud.points(), f, tol)).collect();
    let mut table = VoteTable::empty(cloud.len(), num_instances);
    for fv in per_frame {
        for i in fv.visible {
            table.view_counts[i] += 1;
        }
        for (i, k) in fv.votes {
            table.add_vote(i, k);
        }
    }
    Ok(table)
}

/// Argmax over counts, smallest id on ties, `None` when every count is zero.
pub fn majority_label(counts: &[u32]) -> Option<u32> {
    let mut best: Option<(u32, u32)> = None;
    for (k, &c) in counts.iter().enumerate() {
        if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k as u32, c));
        }
    }
    best.map(|(k, _)| k)
}

fn majority_sparse(row: &[(u32, u32)]) -> Option<u32> {
    let mut best: Option<(u32, u32)> = None;
    for &(k, c) in row {
        if c > 0 && best.is_none_or(|(bk, bc)| c > bc || (c == bc && k < bk)) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Voted,
    Propagated,
    Unlabeled,
}

impl Provenance {
    pub fn code(self) -> char {
        match self {
            Provenance::Voted => 'v',
            Provenance::Propagated => 'p',
            Provenance::Unlabeled => 'u',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'v' => Some(Provenance::Voted),
            'p' => Some(Provenance::Propagated),
            'u' => Some(Provenance::Unlabeled),
            _ => None,
        }
    }
}

/// Per-point instance labels. `None` is the unlabeled sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceLabeling {
    pub num_instances: u32,
    pub labels: Vec<Option<u32>>,
    pub provenance: Vec<Provenance>,
    pub view_counts: Vec<u32>,
    pub class_of: BTreeMap<u32, String>,
}

impl InstanceLabeling {
    pub fn from_votes(votes: &VoteTable) -> Self {
        let labels: Vec<Option<u32>> = (0..votes.len()).map(|i| majority_sparse(votes.sparse_row(i))).collect();
        let provenance = labels
            .iter()
            .map(|l| if l.is_some() { Provenance::Voted } else { Provenance::Unlabeled })
            .collect();
        Self {
            num_instances: votes.num_instances,
            labels,
            provenance,
            view_counts: votes.view_counts.clone(),
            class_of: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Member point indices per instance id, ascending.
    pub fn members(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(k) = l {
                out.entry(*k).or_default().push(i);
            }
        }
        out
    }

    pub fn class_name(&self, id: u32) -> &str {
        self.class_of.get(&id).map(String::as_str).unwrap_or(UNKNOWN_CLASS)
    }

    pub fn provenance_counts(&self) -> ProvenanceCounts {
        let mut c = ProvenanceCounts::default();
        for p in &self.provenance {
            match p {
                Provenance::Voted => c.voted += 1,
                Provenance::Propagated => c.propagated += 1,
                Provenance::Unlabeled => c.unlabeled += 1,
            }
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.provenance.len() != n || self.view_counts.len() != n {
            return Err(Error::IdMismatch("labeling arrays differ in length".into()));
        }
        for (i, l) in self.labels.iter().enumerate() {
            match l {
                Some(k) if *k >= self.num_instances => {
                    return Err(Error::IdMismatch(format!("point {i} has label {k} >= {}", self.num_instances)))
                }
                Some(_) if self.provenance[i] == Provenance::Unlabeled => {
                    return Err(Error::IdMismatch(format!("point {i} is labeled but marked unlabeled")))
                }
                None if self.provenance[i] != Provenance::Unlabeled => {
                    return Err(Error::IdMismatch(format!("point {i} is unlabeled but has provenance")))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub const LABELING_FORMAT: &str = "qsr-instance-labeling";
pub const LABELING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    pub id: u32,
    pub class: String,
    pub point_count: usize,
}

/// On-disk form of an [`InstanceLabeling`].
///
/// `labels` uses -1 for unlabeled points. `provenance` packs one character per
/// point (`v` voted, `p` propagated, `u` unlabeled) to keep files small.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingDocument {
    pub format: String,
    pub version: u32,
    pub num_points: usize,
    pub num_instances: u32,
    pub instances: Vec<InstanceEntry>,
    pub provenance_counts: ProvenanceCounts,
    pub labels: Vec<i64>,
    pub provenance: String,
    pub view_counts: Vec<u32>,
}

impl InstanceLabeling {
    pub fn to_document(&self) -> LabelingDocument {
        let members = self.members();
        let mut ids: Vec<u32> = members.keys().copied().chain(self.class_of.keys().copied()).collect();
        ids.sort_unstable();
        ids.dedup();
        LabelingDocument {
            format: LABELING_FORMAT.into(),
            version: LABELING_VERSION,
            num_points: self.len(),
            num_instances: self.num_instances,
            instances: ids
                .into_iter()
                .map(|id| InstanceEntry {
                    id,
                    class: self.class_name(id).to_string(),
                    point_count: members.get(&id).map_or(0, Vec::len),
                })
                .collect(),
            provenance_counts: self.provenance_counts(),
            labels: self.labels.iter().map(|l| l.map_or(-1, i64::from)).collect(),
            provenance: self.provenance.iter().map(|p| p.code()).collect(),
            view_counts: self.view_counts.clone(),
        }
    }

    pub fn from_document(doc: &LabelingDocument) -> Result<Self> {
        let bad = |m: String| Error::IdMismatch(m);
        if doc.format != LABELING_FORMAT || doc.version != LABELING_VERSION {
            return Err(bad(format!("unsupported labeling format {} v{}", doc.format, doc.version)));
        }
        let labels = doc
            .labels
            .iter()
            .map(|&l| match l {
                -1 => Ok(None),
                k if k >= 0 && k <= i64::from(u32::MAX) => Ok(Some(k as u32)),
                k => Err(bad(format!("invalid label {k}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let provenance = doc
            .provenance
            .chars()
            .map(|c| Provenance::from_code(c).ok_or_else(|| bad(format!("invalid provenance code {c:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let out = Self {
            num_instances: doc.num_instances,
            labels,
            provenance,
            view_counts: doc.view_counts.clone(),
            class_of: doc.instances.iter().map(|e| (e.id, e.class.clone())).collect(),
        };
        if out.len() != doc.num_points {
            return Err(bad(format!("labeling lists {} points, header says {}", out.len(), doc.num_points)));
        }
        out.validate()?;
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("labeling serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceCounts {
    pub voted: usize,
    pub propagated: usize,
    pub unlabeled: usize,
}

/// Fills labels of points that no frame observed, from labeled neighbors
/// within `radius`.
///
/// Each round reads the labels as they stood at the start of the round. A
/// candidate takes the majority label of its voted neighbors; only when it has
/// none does it fall back to neighbors propagated in earlier rounds. Points
/// that were observed but landed on background keep their empty label.
pub fn propagate_labels(cloud: &PointCloud, labeling: &InstanceLabeling, radius: f64, max_rounds: usize) -> Result<InstanceLabeling> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("propagation radius {radius} must be positive")));
    }
    if labeling.len() != cloud.len() {
        return Err(Error::IdMismatch(format!(
            "labeling covers {} points, cloud has {}",
            labeling.len(),
            cloud.len()
        )));
    }
    let mut out = labeling.clone();
    let mut pending: Vec<usize> = (0..cloud.len())
        .filter(|&i| out.labels[i].is_none() && out.view_counts[i] == 0)
        .collect();
    if pending.is_empty() {
        return Ok(out);
    }
    let labeled = (0..cloud.len()).filter(|&i| out.labels[i].is_some());
    let mut grid = NeighborGrid::with_subset(cloud.points(), radius, labeled);

    for _ in 0..max_rounds {
        let assigned: Vec<(usize, u32)> = pending
            .par_iter()
            .filter_map(|&i| {
                let mut voted: BTreeMap<u32, u32> = BTreeMap::new();
                let mut propagated: BTreeMap<u32, u32> = BTreeMap::new();
                grid.for_each_within(&cloud.get(i), |j| {
                    if let Some(k) = out.labels[j] {
                        let bucket = match out.provenance[j] {
                            Provenance::Voted => &mut voted,
                            _ => &mut propagated,
                        };
                        *bucket.entry(k).or_default() += 1;
                    }
                });
                let source = if voted.is_empty() { &propagated } else { &voted };
                let row: Vec<(u32, u32)> = source.iter().map(|(&k, &c)| (k, c)).collect();
                majority_sparse(&row).map(|k| (i, k))
            })
            .collect();
        if assigned.is_empty() {
            break;
        }
        for &(i, k) in &assigned {
            out.labels[i] = Some(k);
            out.provenance[i] = Provenance::Propagated;
        }
        pending.retain(|&i| out.labels[i].is_none());
        let labeled = (0..cloud.len()).filter(|&i| out.labels[i].is_some());
        grid = NeighborGrid::with_subset(cloud.points(), radius, labeled);
        if pending.is_empty() {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl Default for DbscanParams {
    fn default() -> Self {
        Self { eps: 0.05, min_pts: 10 }
    }
}

impl DbscanParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) || self.min_pts < 1 {
            return Err(Error::InvalidParameter(format!(
                "dbscan eps {} / min_pts {} out of range",
                self.eps, self.min_pts
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clustering {
    /// Cluster id per input point; `None` marks noise.
    pub assignment: Vec<Option<usize>>,
    pub is_core: Vec<bool>,
    pub num_clusters: usize,
}

impl Clustering {
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, a) in self.assignment.iter().enumerate() {
            if let Some(c) = a {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i].is_none()).collect()
    }
}

/// DBSCAN with inclusive neighborhoods (a point counts itself). Clusters are
/// seeded in index order and fully expanded before the next seed, so a border
/// point reachable from several clusters joins the earliest one.
pub fn dbscan(points: &[Point3], params: &DbscanParams) -> Result<Clustering> {
    params.validate()?;
    let n = points.len();
    let grid = NeighborGrid::new(points, params.eps);
    let neighbors: Vec<Vec<usize>> = points.par_iter().map(|p| grid.within(p)).collect();
    let is_core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut num_clusters = 0;
    let mut queue = std::collections::VecDeque::new();
    for seed in 0..n {
        if !is_core[seed] || assignment[seed].is_some() {
            continue;
        }
        let cluster = num_clusters;
        num_clusters += 1;
        assignment[seed] = Some(cluster);
        queue.push_back(seed);
        while let Some(p) = queue.pop_front() {
            if !is_core[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if assignment[q].is_none() {
                    assignment[q] = Some(cluster);
                    queue.push_back(q);
                }
            }
        }
    }
    Ok(Clustering {
        assignment,
        is_core,
        num_clusters,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineOutcome {
    /// Retained indices (into the caller's index space), ascending.
    pub retained: Vec<usize>,
    /// Set when DBSCAN found no cluster and the input was kept unchanged.
    pub no_cluster: bool,
}

/// Keeps the largest DBSCAN cluster (core and border points) of one instance.
/// Equal-size clusters resolve to the one holding the lowest point index.
pub fn refine_instance(cloud_points: &[Point3], members: &[usize], params: &DbscanParams) -> Result<RefineOutcome> {
    if members.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let local: Vec<Point3> = members.iter().map(|&i| cloud_points[i]).collect();
    let clustering = dbscan(&local, params)?;
    if clustering.num_clusters == 0 {
        let mut retained = members.to_vec();
        retained.sort_unstable();
        return Ok(RefineOutcome {
            retained,
            no_cluster: true,
        });
    }
    let best = clustering
        .clusters()
        .into_iter()
        .map(|c| c.into_iter().map(|j| members[j]).collect::<Vec<_>>())
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .max_by(|a, b| a.len().cmp(&b.len()).then(b[0].cmp(&a[0])))
        .expect("at least one cluster");
    Ok(RefineOutcome {
        retained: best,
        no_cluster: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiftingConfig {
    pub tolerance: DepthTolerance,
    pub propagation_radius: f64,
    pub propagation_rounds: usize,
    pub dbscan: DbscanParams,
}

impl Default for LiftingConfig {
    fn default() -> Self {
        Self {
            tolerance: DepthTolerance::default(),
            propagation_radius: 0.05,
            propagation_rounds: 3,
            dbscan: DbscanParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labeling: InstanceLabeling,
    pub warnings: Vec<String>,
}

/// Per-frame class votes for every instance visible in that frame, using the
/// highest-IoU rule on the frame's masks.
///
/// Computed from one joint histogram pass rather than per-class binary masks;
/// the result equals [`assign_semantic_class`] applied mask by mask.
pub fn frame_class_votes(frame: &CameraFrame, classes: &BTreeMap<u16, String>) -> BTreeMap<u32, String> {
    let names: Vec<&str> = {
        let mut v: Vec<&str> = classes.iter().filter(|(id, _)| **id != 0).map(|(_, n)| n.as_str()).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let name_index: BTreeMap<u16, usize> = classes
        .iter()
        .filter(|(id, _)| **id != 0)
        .map(|(id, n)| (*id, names.binary_search(&n.as_str()).expect("name listed")))
        .collect();

    let mut inst_area: BTreeMap<u16, usize> = BTreeMap::new();
    let mut class_area = vec![0usize; names.len()];
    let mut inter: BTreeMap<(u16, usize), usize> = BTreeMap::new();
    for (&inst, &sem) in frame.instance_mask.data().iter().zip(frame.semantic_mask.data()) {
        let class = name_index.get(&sem).copied();
        if let Some(c) = class {
            class_area[c] += 1;
        }
        if inst > 0 {
            *inst_area.entry(inst).or_default() += 1;
            if let Some(c) = class {
                *inter.entry((inst, c)).or_default() += 1;
            }
        }
    }

    let mut out = BTreeMap::new();
    if names.is_empty() {
        return out;
    }
    for (&inst, &area) in &inst_area {
        let scored = names.iter().enumerate().map(|(c, name)| {
            let i = inter.get(&(inst, c)).copied().unwrap_or(0);
            let union = area + class_area[c] - i;
            let iou = if union == 0 { 0.0 } else { i as f64 / union as f64 };
            (*name, iou)
        });
        out.insert(u32::from(inst) - 1, pick_best_class(scored));
    }
    out
}

/// Majority over per-frame class votes; `"unknown"` votes only count when
/// nothing else was voted. Ties resolve lexicographically.
pub fn majority_class<'a>(votes: impl IntoIterator<Item = &'a str>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let known = counts.iter().filter(|(k, _)| **k != UNKNOWN_CLASS);
    let mut best: Option<(&str, usize)> = None;
    for (k, &c) in known {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k.to_string()).unwrap_or_else(|| UNKNOWN_CLASS.to_string())
}

/// Full lifting pipeline: votes, majority, propagation, per-instance DBSCAN
/// refinement and semantic class assignment.
pub fn segment_point_cloud(
    cloud: &PointCloud,
    frames: &[CameraFrame],
    classes: &BTreeMap<u16, String>,
    config: &LiftingConfig,
) -> Result<Segmentation> {
    if frames.is_empty() {
        return Err(Error::NoFrames);
    }
    if cloud.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    config.dbscan.validate()?;
    let mut warnings = Vec::new();

    let votes = accumulate_votes(cloud, frames, &config.tolerance)?;
    let voted = InstanceLabeling::from_votes(&votes);
    let mut labeling = propagate_labels(cloud, &voted, config.propagation_radius, config.propagation_rounds)?;

    let members = labeling.members();
    let refined: Vec<(u32, Result<RefineOutcome>)> = members
        .par_iter()
        .map(|(&id, idx)| (id, refine_instance(cloud.points(), idx, &config.dbscan)))
        .collect();
    for (id, outcome) in refined {
        let outcome = outcome?;
        if outcome.no_cluster {
            warnings.push(format!("instance {id}: no dense cluster, kept all {} points", outcome.retained.len()));
            continue;
        }
        let keep: std::collections::HashSet<usize> = outcome.retained.into_iter().collect();
        for &i in &members[&id] {
            if !keep.contains(&i) {
                labeling.labels[i] = None;
                labeling.provenance[i] = Provenance::Unlabeled;
            }
        }
    }

    let per_frame: Vec<BTreeMap<u32, String>> = frames.par_iter().map(|f| frame_class_votes(f, classes)).collect();
    let mut class_votes: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for fv in &per_frame {
        for (id, class) in fv {
            class_votes.entry(*id).or_default().push(class.as_str());
        }
    }
    labeling.class_of = class_votes
        .into_iter()
        .map(|(id, votes)| (id, majority_class(votes)))
        .collect();
    for id in labeling.members().keys() {
        labeling.class_of.entry(*id).or_insert_with(|| UNKNOWN_CLASS.to_string());
    }

    if labeling.labels.iter().all(Option::is_none) {
        warnings.push("EmptySegmentation: no point received an instance label".into());
    }
    Ok(Segmentation { labeling, warnings })
}
