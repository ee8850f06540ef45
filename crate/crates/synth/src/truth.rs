use std::collections::BTreeMap;

use qsr_core::geometry::{Aabb3, Point3};
use serde::{Deserialize, Serialize};

/// Vertical contact tolerance for "on top of", meters.
pub const CONTACT_TOL: f64 = 0.05;
/// Largest footprint gap for "next to", meters.
pub const NEXT_TO_GAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtObject {
    /// Instance id; instance masks store `id + 1`.
    pub id: u32,
    pub class: String,
    /// Class painted into the semantic masks.
    pub panoptic_class: String,
    pub color: [u8; 3],
    pub centroid: Point3,
    pub aabb: Aabb3,
    pub point_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OracleRelation {
    pub src: u32,
    pub dst: u32,
    pub relation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameObjects {
    pub frame_id: u32,
    /// Instances covering at least one pixel of the clean instance mask.
    pub object_ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub scene_id: String,
    pub seed: u64,
    pub semantic_classes: BTreeMap<u16, String>,
    pub objects: Vec<GtObject>,
    /// True instance per point; `None` for room surfaces and outliers.
    pub point_instance: Vec<Option<u32>>,
    /// Whether each point passes the depth-consistency test in at least one
    /// frame (clean depth, default tolerance).
    pub visible: Vec<bool>,
    /// Fraction of instance-mask pixels changed by corruption, per frame.
    pub corrupted_fraction: Vec<f64>,
    pub frame_objects: Vec<FrameObjects>,
    pub relations: Vec<OracleRelation>,
}

impl GroundTruth {
    pub fn object(&self, id: u32) -> Option<&GtObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

fn overlap_1d(a0: f64, a1: f64, b0: f64, b1: f64) -> bool {
    a0 < b1 && b0 < a1
}

fn interval_gap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    if b0 > a1 {
        b0 - a1
    } else if a0 > b1 {
        a0 - b1
    } else {
        0.0
    }
}

/// Relation of `a` to `b` from true boxes.
///
/// Footprints that overlap in the plane give a vertical relation: "on top of"
/// when `a` starts within [`CONTACT_TOL`] of `b`'s top, "above" when it starts
/// higher, "below" when `a` ends under `b` (contact included). Anything else,
/// including interpenetration, falls back to "next to" when the planar gap
/// between footprints is at most [`NEXT_TO_GAP`].
pub fn relation_between(a: &Aabb3, b: &Aabb3) -> Option<&'static str> {
    let planar = overlap_1d(a.min.x, a.max.x, b.min.x, b.max.x) && overlap_1d(a.min.y, a.max.y, b.min.y, b.max.y);
    if planar {
        let rise = a.min.z - b.max.z;
        if rise.abs() <= CONTACT_TOL {
            return Some("on top of");
        }
        if rise > 0.0 {
            return Some("above");
        }
        let drop = b.min.z - a.max.z;
        if drop >= -CONTACT_TOL {
            return Some("below");
        }
    }
    let gx = interval_gap(a.min.x, a.max.x, b.min.x, b.max.x);
    let gy = interval_gap(a.min.y, a.max.y, b.min.y, b.max.y);
    (gx.hypot(gy) <= NEXT_TO_GAP).then_some("next to")
}

/// Every ordered pair of distinct objects with a relation, sorted.
pub fn oracle_relations(objects: &[GtObject]) -> Vec<OracleRelation> {
    let mut out = Vec::new();
    for a in objects {
        for b in objects {
            if a.id == b.id {
                continue;
            }
            if let Some(rel) = relation_between(&a.aabb, &b.aabb) {
                out.push(OracleRelation {
                    src: a.id,
                    dst: b.id,
                    relation: rel.into(),
                });
            }
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bx(min: [f64; 3], max: [f64; 3]) -> Aabb3 {
        Aabb3 { min: min.into(), max: max.into() }
    }

    #[test]
    fn stacked_boxes() {
        let table = bx([0.0, 0.0, 0.0], [1.0, 1.0, 0.7]);
        let vase = bx([0.4, 0.4, 0.7], [0.6, 0.6, 1.0]);
        assert_eq!(relation_between(&vase, &table), Some("on top of"));
        assert_eq!(relation_between(&table, &vase), Some("below"));
        let lamp = bx([0.4, 0.4, 1.5], [0.6, 0.6, 1.8]);
        assert_eq!(relation_between(&lamp, &table), Some("above"));
    }

    #[test]
    fn planar_relations() {
        let a = bx([0.0, 0.0, 0.0], [1.0, 1.0, 1.0]);
        let far = bx([4.0, 0.0, 0.0], [5.0, 1.0, 1.0]);
        assert_eq!(relation_between(&a, &far), None);
        let near = bx([1.3, 0.0, 0.0], [2.0, 1.0, 1.0]);
        assert_eq!(relation_between(&a, &near), Some("next to"));
        assert_eq!(relation_between(&near, &a), Some("next to"));
    }
}
