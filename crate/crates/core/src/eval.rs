//! Query-suite evaluation: precision/recall for descriptive queries and
//! soft-binary success for affordance and negation queries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::query::{route, Query, QueryContext, QueryMode, QueryResult, Route};
use crate::scene_graph::SceneGraph3D;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    /// Set when nothing was retrieved; precision is then reported as 0.
    pub empty_retrieval: bool,
}

pub fn precision_recall(retrieved: &BTreeSet<u32>, truth: &BTreeSet<u32>) -> Result<PrecisionRecall> {
    if truth.is_empty() {
        return Err(Error::InvalidGroundTruth("descriptive ground truth is empty".into()));
    }
    let inter = retrieved.intersection(truth).count() as f64;
    Ok(PrecisionRecall {
        precision: if retrieved.is_empty() { 0.0 } else { inter / retrieved.len() as f64 },
        recall: inter / truth.len() as f64,
        empty_retrieval: retrieved.is_empty(),
    })
}

/// A named condition over a node's class and attributes.
///
/// A node satisfies it when its class is in `classes` (or `classes` is
/// empty), its class is not in `exclude`, and every listed attribute
/// contains the given value (case-insensitive).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

/// Outcome of checking one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    Satisfied,
    Violated,
    /// A required attribute is missing on the node.
    Unverifiable,
}

fn class_in(class: &str, list: &[String]) -> bool {
    list.iter().any(|c| c.eq_ignore_ascii_case(class))
}

impl Predicate {
    pub fn new(name: &str, classes: &[&str], exclude: &[&str]) -> Self {
        Self {
            name: name.into(),
            classes: classes.iter().map(|s| s.to_string()).collect(),
            exclude: exclude.iter().map(|s| s.to_string()).collect(),
            attributes: BTreeMap::new(),
        }
    }

    pub fn check(&self, graph: &SceneGraph3D, object_id: u32) -> Check {
        let Some(node) = graph.nodes.get(&object_id) else {
            return Check::Unverifiable;
        };
        if (!self.classes.is_empty() && !class_in(&node.class, &self.classes)) || class_in(&node.class, &self.exclude) {
            return Check::Violated;
        }
        let present: BTreeMap<&str, &str> = node.attributes.present().into_iter().collect();
        for (key, want) in &self.attributes {
            match present.get(key.as_str()) {
                None => return Check::Unverifiable,
                Some(have) if !have.to_lowercase().contains(&want.to_lowercase()) => return Check::Violated,
                Some(_) => {}
            }
        }
        Check::Satisfied
    }
}

pub const SEATING: [&str; 6] = ["chair", "sofa", "bench", "armchair", "ottoman", "stool"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredicateRegistry {
    predicates: BTreeMap<String, Predicate>,
}

impl Default for PredicateRegistry {
    fn default() -> Self {
        let mut r = Self {
            predicates: BTreeMap::new(),
        };
        r.register(Predicate::new("is_seating", &SEATING, &[]));
        r.register(Predicate::new("is_seating_not_chair", &SEATING, &["chair", "armchair"]));
        r.register(Predicate::new("is_seating_not_sofa", &SEATING, &["sofa"]));
        r.register(Predicate::new("is_seating_not_stool", &SEATING, &["stool"]));
        r.register(Predicate::new(
            "is_surface",
            &["table", "desk", "counter", "shelf", "nightstand", "cabinet", "dresser"],
            &[],
        ));
        r.register(Predicate::new("is_storage", &["shelf", "cabinet", "dresser", "drawer", "box", "basket", "bookshelf"], &[]));
        r.register(Predicate::new("is_light_source", &["lamp", "light", "ceiling light", "chandelier"], &[]));
        r.register(Predicate::new("is_sleeping_place", &["bed", "sofa"], &[]));
        r.register(Predicate::new("is_plant", &["plant", "potted plant", "flower"], &[]));
        r.register(Predicate::new("is_container", &["vase", "bowl", "pot", "cup", "basket", "bin"], &[]));
        r
    }
}

impl PredicateRegistry {
    pub fn register(&mut self, p: Predicate) {
        self.predicates.insert(p.name.clone(), p);
    }

    pub fn get(&self, name: &str) -> Result<&Predicate> {
        self.predicates
            .get(name)
            .ok_or_else(|| Error::InvalidGroundTruth(format!("unknown predicate \"{name}\"")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.predicates.keys().map(String::as_str)
    }
}

/// Soft-binary success: true iff at least one hit satisfies the predicate.
/// The second value is set when the query failed only because no hit could
/// be checked.
pub fn soft_success(result: &QueryResult, predicate: &Predicate, graph: &SceneGraph3D) -> (bool, bool) {
    let checks: Vec<Check> = result.hits.iter().map(|h| predicate.check(graph, h.object_id)).collect();
    let success = checks.contains(&Check::Satisfied);
    let unverifiable = !success && !checks.is_empty() && checks.iter().all(|c| *c == Check::Unverifiable);
    (success, unverifiable)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundTruth {
    Objects(BTreeSet<u32>),
    Predicate(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub text: String,
    pub mode: QueryMode,
    pub ground_truth: GroundTruth,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Suite {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default)]
    pub predicates: Vec<Predicate>,
    pub queries: Vec<QuerySpec>,
}

impl Suite {
    /// Checks ground-truth shape and predicate names before anything runs.
    pub fn validate(&self, registry: &PredicateRegistry) -> Result<()> {
        for (i, spec) in self.queries.iter().enumerate() {
            match (&spec.mode, &spec.ground_truth) {
                (QueryMode::Descriptive, GroundTruth::Objects(ids)) if !ids.is_empty() => {}
                (QueryMode::Descriptive, _) => {
                    return Err(Error::InvalidGroundTruth(format!("query {i}: descriptive queries need a non-empty object set")))
                }
                (QueryMode::Affordance | QueryMode::Negation, GroundTruth::Predicate(name)) => {
                    registry.get(name)?;
                }
                (QueryMode::Affordance | QueryMode::Negation, _) => {
                    return Err(Error::InvalidGroundTruth(format!("query {i}: affordance and negation queries need a predicate")))
                }
                (QueryMode::Auto, _) => {
                    return Err(Error::InvalidGroundTruth(format!("query {i}: suite queries need an explicit mode")))
                }
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> PredicateRegistry {
        let mut r = PredicateRegistry::default();
        for p in &self.predicates {
            r.register(p.clone());
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_index: usize,
    pub text: String,
    pub mode: QueryMode,
    pub route: Route,
    pub hits: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteMetrics {
    pub route: Route,
    pub descriptive_precision: Option<f64>,
    pub descriptive_recall: Option<f64>,
    pub affordance_success: Option<f64>,
    pub negation_success: Option<f64>,
    pub descriptive_count: usize,
    pub affordance_count: usize,
    pub negation_count: usize,
    pub failures: usize,
}

/// Metric differences of `route` relative to `baseline` (route minus baseline).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDelta {
    pub route: Route,
    pub baseline: Route,
    pub descriptive_precision: Option<f64>,
    pub descriptive_recall: Option<f64>,
    pub affordance_success: Option<f64>,
    pub negation_success: Option<f64>,
}

/// Published figures for orientation only; never compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    pub route: Route,
    pub descriptive_precision: f64,
    pub descriptive_recall: f64,
    pub affordance_success: f64,
    pub negation_success: f64,
}

pub fn reference_rows() -> Vec<ReferenceRow> {
    let row = |route, p, r, a, n| ReferenceRow {
        label: "published reference (Replica, large-model providers)".into(),
        route,
        descriptive_precision: p,
        descriptive_recall: r,
        affordance_success: a,
        negation_success: n,
    };
    vec![row(Route::PointCloud, 0.88, 0.91, 0.80, 0.71), row(Route::SceneGraph, 0.74, 0.72, 0.93, 0.90)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    pub routes: Vec<RouteMetrics>,
    pub deltas: Vec<RouteDelta>,
    pub records: Vec<QueryRecord>,
    pub reference: Vec<ReferenceRow>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn score_record(
    index: usize,
    spec: &QuerySpec,
    route_: Route,
    outcome: Result<QueryResult>,
    registry: &PredicateRegistry,
    graph: &SceneGraph3D,
) -> QueryRecord {
    let mut rec = QueryRecord {
        query_index: index,
        text: spec.text.clone(),
        mode: spec.mode,
        route: route_,
        hits: Vec::new(),
        precision: None,
        recall: None,
        success: None,
        error: None,
        flags: Vec::new(),
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            rec.error = Some(e.to_string());
            QueryResult {
                hits: Vec::new(),
                route_taken: route_.to_string(),
                extracted_terms: None,
                answer_text: None,
                warnings: Vec::new(),
            }
        }
    };
    rec.hits = result.object_ids();
    match &spec.ground_truth {
        GroundTruth::Objects(truth) => {
            let retrieved: BTreeSet<u32> = rec.hits.iter().copied().collect();
            match precision_recall(&retrieved, truth) {
                Ok(pr) => {
                    rec.precision = Some(pr.precision);
                    rec.recall = Some(pr.recall);
                    if pr.empty_retrieval {
                        rec.flags.push("empty_retrieval".into());
                    }
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
        }
        GroundTruth::Predicate(name) => match registry.get(name) {
            Ok(p) => {
                let (ok, unverifiable) = soft_success(&result, p, graph);
                rec.success = Some(ok);
                if unverifiable {
                    rec.flags.push("unverifiable".into());
                }
            }
            Err(e) => {
                rec.success = Some(false);
                rec.error = Some(e.to_string());
            }
        },
    }
    rec
}

/// Metrics for one route from its records. Errors count as zero scores.
pub fn aggregate(route_: Route, records: &[QueryRecord]) -> RouteMetrics {
    let mine: Vec<&QueryRecord> = records.iter().filter(|r| r.route == route_).collect();
    let desc: Vec<&&QueryRecord> = mine.iter().filter(|r| r.mode == QueryMode::Descriptive).collect();
    let rate = |mode: QueryMode| -> (Option<f64>, usize) {
        let xs: Vec<f64> = mine
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| if r.success == Some(true) { 1.0 } else { 0.0 })
            .collect();
        (mean(&xs), xs.len())
    };
    let (affordance_success, affordance_count) = rate(QueryMode::Affordance);
    let (negation_success, negation_count) = rate(QueryMode::Negation);
    RouteMetrics {
        route: route_,
        descriptive_precision: mean(&desc.iter().map(|r| r.precision.unwrap_or(0.0)).collect::<Vec<_>>()),
        descriptive_recall: mean(&desc.iter().map(|r| r.recall.unwrap_or(0.0)).collect::<Vec<_>>()),
        affordance_success,
        negation_success,
        descriptive_count: desc.len(),
        affordance_count,
        negation_count,
        failures: mine.iter().filter(|r| r.error.is_some()).count(),
    }
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

pub fn deltas(metrics: &[RouteMetrics]) -> Vec<RouteDelta> {
    let Some(base) = metrics.first() else {
        return Vec::new();
    };
    metrics[1..]
        .iter()
        .map(|m| RouteDelta {
            route: m.route,
            baseline: base.route,
            descriptive_precision: diff(m.descriptive_precision, base.descriptive_precision),
            descriptive_recall: diff(m.descriptive_recall, base.descriptive_recall),
            affordance_success: diff(m.affordance_success, base.affordance_success),
            negation_success: diff(m.negation_success, base.negation_success),
        })
        .collect()
}

/// Runs every query through every route. Per-query errors become failing
/// records; only an invalid suite aborts.
pub fn run_suite(ctx: &QueryContext, suite: &Suite, routes: &[Route]) -> Result<SuiteReport> {
    let registry = suite.registry();
    suite.validate(&registry)?;
    if routes.is_empty() || routes.contains(&Route::Auto) {
        return Err(Error::BadRequest("evaluation needs explicit routes".into()));
    }
    let jobs: Vec<(usize, &QuerySpec, Route)> = suite
        .queries
        .iter()
        .enumerate()
        .flat_map(|(i, s)| routes.iter().map(move |r| (i, s, *r)))
        .collect();
    let ctx = *ctx;
    let records: Vec<QueryRecord> = jobs
        .par_iter()
        .map(|&(i, spec, r)| {
            let q = Query {
                text: spec.text.clone(),
                mode: spec.mode,
                route: r,
                top_k: spec.top_k.unwrap_or(5),
            };
            score_record(i, spec, r, route(&q, &ctx), &registry, ctx.graph)
        })
        .collect();
    let routes_metrics: Vec<RouteMetrics> = routes.iter().map(|r| aggregate(*r, &records)).collect();
    Ok(SuiteReport {
        scene_id: suite.scene_id.clone(),
        deltas: deltas(&routes_metrics),
        routes: routes_metrics,
        records,
        reference: reference_rows(),
    })
}

fn cell(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.2}"))
}

fn signed(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:+.2}"))
}

/// Plain-text summary table.
pub fn render_table(report: &SuiteReport) -> String {
    let mut out = String::new();
    let header = format!(
        "{:<44} {:>9} {:>9} {:>11} {:>9}",
        "route", "desc. P", "desc. R", "affordance", "negation"
    );
    writeln!(out, "{header}").unwrap();
    writeln!(out, "{}", "-".repeat(header.len())).unwrap();
    for m in &report.routes {
        writeln!(
            out,
            "{:<44} {:>9} {:>9} {:>11} {:>9}",
            m.route.as_str(),
            cell(m.descriptive_precision),
            cell(m.descriptive_recall),
            cell(m.affordance_success),
            cell(m.negation_success)
        )
        .unwrap();
    }
    for d in &report.deltas {
        writeln!(
            out,
            "{:<44} {:>9} {:>9} {:>11} {:>9}",
            format!("{} vs {}", d.route.as_str(), d.baseline.as_str()),
            signed(d.descriptive_precision),
            signed(d.descriptive_recall),
            signed(d.affordance_success),
            signed(d.negation_success)
        )
        .unwrap();
    }
    for r in &report.reference {
        writeln!(
            out,
            "{:<44} {:>9.2} {:>9.2} {:>11.2} {:>9.2}",
            format!("{} [{}]", r.route.as_str(), "reference"),
            r.descriptive_precision,
            r.descriptive_recall,
            r.affordance_success,
            r.negation_success
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb3, Point3};
    use crate::query::Hit;
    use crate::scene_graph::tests::{graph, node};
    use proptest::prelude::*;

    fn ids(xs: &[u32]) -> BTreeSet<u32> {
        xs.iter().copied().collect()
    }

    #[test]
    fn precision_recall_cases() {
        let pr = precision_recall(&ids(&[1, 2]), &ids(&[1])).unwrap();
        assert_eq!((pr.precision, pr.recall), (0.5, 1.0));
        let pr = precision_recall(&ids(&[]), &ids(&[1])).unwrap();
        assert_eq!((pr.precision, pr.recall, pr.empty_retrieval), (0.0, 0.0, true));
        let pr = precision_recall(&ids(&[3, 4]), &ids(&[3, 4])).unwrap();
        assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        assert!(matches!(precision_recall(&ids(&[1]), &ids(&[])), Err(Error::InvalidGroundTruth(_))));
    }

    fn result(hits: &[u32]) -> QueryResult {
        QueryResult {
            hits: hits
                .iter()
                .map(|&id| Hit {
                    object_id: id,
                    class: String::new(),
                    score: 1.0,
                    centroid: Point3::new(0.0, 0.0, 0.0),
                    aabb: Aabb3 {
                        min: Point3::new(0.0, 0.0, 0.0),
                        max: Point3::new(0.0, 0.0, 0.0),
                    },
                })
                .collect(),
            route_taken: "point_cloud".into(),
            extracted_terms: None,
            answer_text: None,
            warnings: vec![],
        }
    }

    #[test]
    fn soft_success_cases() {
        let g = graph(
            vec![node(1, "sofa", [0.0; 3]), node(2, "table", [1.0, 0.0, 0.0]), node(3, "chair", [2.0, 0.0, 0.0])],
            vec![],
        );
        let reg = PredicateRegistry::default();
        let seating = reg.get("is_seating").unwrap();
        assert_eq!(soft_success(&result(&[1]), seating, &g), (true, false));
        assert_eq!(soft_success(&result(&[]), seating, &g), (false, false));
        assert_eq!(soft_success(&result(&[2]), seating, &g), (false, false));
        let not_chair = reg.get("is_seating_not_chair").unwrap();
        assert!(!soft_success(&result(&[3]), not_chair, &g).0);
        assert!(soft_success(&result(&[3, 1]), not_chair, &g).0);
        let mut red = Predicate::new("red_seat", &SEATING, &[]);
        red.attributes.insert("colour".into(), "red".into());
        assert_eq!(soft_success(&result(&[1]), &red, &g), (false, true));
        assert!(reg.get("is_flying").is_err());
    }

    fn record(route: Route, mode: QueryMode, success: Option<bool>, pr: Option<(f64, f64)>) -> QueryRecord {
        QueryRecord {
            query_index: 0,
            text: "q".into(),
            mode,
            route,
            hits: vec![],
            precision: pr.map(|p| p.0),
            recall: pr.map(|p| p.1),
            success,
            error: None,
            flags: vec![],
        }
    }

    #[test]
    fn aggregation_and_delta() {
        // two negation queries failing on point_cloud, two_step fixes one
        let mut recs = vec![
            record(Route::PointCloud, QueryMode::Negation, Some(false), None),
            record(Route::PointCloud, QueryMode::Negation, Some(false), None),
            record(Route::TwoStep, QueryMode::Negation, Some(true), None),
            record(Route::TwoStep, QueryMode::Negation, Some(false), None),
        ];
        for i in 0..5 {
            recs.push(record(Route::PointCloud, QueryMode::Affordance, Some(i != 2), None));
        }
        recs.push(record(Route::PointCloud, QueryMode::Descriptive, None, Some((0.5, 1.0))));
        recs.push(record(Route::PointCloud, QueryMode::Descriptive, None, Some((1.0, 0.5))));
        let m = vec![aggregate(Route::PointCloud, &recs), aggregate(Route::TwoStep, &recs)];
        assert_eq!(m[0].affordance_success, Some(0.8));
        assert_eq!(m[0].negation_success, Some(0.0));
        assert_eq!(m[0].descriptive_precision, Some(0.75));
        assert_eq!(m[0].descriptive_recall, Some(0.75));
        assert_eq!(m[1].negation_success, Some(0.5));
        assert_eq!(m[1].affordance_success, None);
        let d = deltas(&m);
        assert_eq!(d[0].negation_success, Some(0.5));
        assert_eq!(d[0].affordance_success, None);
    }

    #[test]
    fn suite_validation() {
        let reg = PredicateRegistry::default();
        let spec = |mode, gt| QuerySpec {
            text: "x".into(),
            mode,
            ground_truth: gt,
            top_k: None,
        };
        let ok = Suite {
            scene_id: None,
            predicates: vec![],
            queries: vec![
                spec(QueryMode::Descriptive, GroundTruth::Objects(ids(&[1]))),
                spec(QueryMode::Negation, GroundTruth::Predicate("is_seating_not_chair".into())),
            ],
        };
        assert!(ok.validate(&reg).is_ok());
        let text = serde_json::to_string(&ok).unwrap();
        assert!(text.contains(r#""ground_truth":{"objects":[1]}"#));
        assert_eq!(serde_json::from_str::<Suite>(&text).unwrap(), ok);
        for bad in [
            spec(QueryMode::Descriptive, GroundTruth::Objects(ids(&[]))),
            spec(QueryMode::Affordance, GroundTruth::Predicate("nope".into())),
            spec(QueryMode::Affordance, GroundTruth::Objects(ids(&[1]))),
            spec(QueryMode::Auto, GroundTruth::Objects(ids(&[1]))),
        ] {
            let s = Suite {
                queries: vec![bad],
                ..Default::default()
            };
            assert!(matches!(s.validate(&reg), Err(Error::InvalidGroundTruth(_))));
        }
    }

    #[test]
    fn table_lists_routes_and_reference() {
        let report = SuiteReport {
            scene_id: None,
            routes: vec![aggregate(Route::PointCloud, &[]), aggregate(Route::TwoStep, &[])],
            deltas: vec![],
            records: vec![],
            reference: reference_rows(),
        };
        let t = render_table(&report);
        assert!(t.contains("point_cloud") && t.contains("two_step") && t.contains("[reference]"));
        assert!(t.contains("0.88"));
    }

    proptest! {
        #[test]
        fn rates_permutation_invariant(
            (outcomes, permuted) in prop::collection::vec(any::<bool>(), 1..20)
                .prop_flat_map(|v| (Just(v.clone()), Just(v).prop_shuffle()))
        ) {
            let to_records = |xs: &[bool]| -> Vec<QueryRecord> {
                xs.iter().map(|&s| record(Route::TwoStep, QueryMode::Affordance, Some(s), None)).collect()
            };
            let recs = to_records(&outcomes);
            let shuffled = to_records(&permuted);
            prop_assert_eq!(aggregate(Route::TwoStep, &recs), aggregate(Route::TwoStep, &shuffled));
            let before = aggregate(Route::TwoStep, &recs).affordance_success.unwrap();
            let mut more = recs.clone();
            more.push(record(Route::TwoStep, QueryMode::Affordance, Some(true), None));
            prop_assert!(aggregate(Route::TwoStep, &more).affordance_success.unwrap() >= before);
        }

        #[test]
        fn perfect_route_scores_one(truth in prop::collection::btree_set(0u32..50, 1..10)) {
            let pr = precision_recall(&truth, &truth).unwrap();
            prop_assert_eq!((pr.precision, pr.recall), (1.0, 1.0));
        }
    }
}
