//! Query routing over the image-side index, the scene graph, and the
//! two-step combination of both.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embedding::{build_node_document, query_index, EmbeddingIndex, EmbeddingProvider, IndexSide, ScoredId, SearchParams};
use crate::error::{Error, Result};
use crate::geometry::{Aabb3, Point3};
use crate::prompts::{self, extract_json_block, TextGenerator};
use crate::scene_graph::SceneGraph3D;

pub const NO_RESULTS: &str = "No relevant objects found.";
pub const EXCLUSION_CUES: [&str; 4] = ["other than", "unlike", "not", "except"];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryMode {
    Descriptive,
    Affordance,
    Negation,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    PointCloud,
    SceneGraph,
    TwoStep,
    #[default]
    Auto,
}

impl Route {
    pub fn as_str(self) -> &'static str {
        match self {
            Route::PointCloud => "point_cloud",
            Route::SceneGraph => "scene_graph",
            Route::TwoStep => "two_step",
            Route::Auto => "auto",
        }
    }
}

impl fmt::Display for Route {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Route {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "point_cloud" => Ok(Route::PointCloud),
            "scene_graph" => Ok(Route::SceneGraph),
            "two_step" => Ok(Route::TwoStep),
            "auto" => Ok(Route::Auto),
            other => Err(Error::BadRequest(format!("unknown route \"{other}\""))),
        }
    }
}

impl FromStr for QueryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "descriptive" => Ok(QueryMode::Descriptive),
            "affordance" => Ok(QueryMode::Affordance),
            "negation" => Ok(QueryMode::Negation),
            "auto" => Ok(QueryMode::Auto),
            other => Err(Error::BadRequest(format!("unknown query mode \"{other}\""))),
        }
    }
}

fn default_top_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default)]
    pub mode: QueryMode,
    #[serde(default)]
    pub route: Route,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            mode: QueryMode::Auto,
            route: Route::Auto,
            top_k: default_top_k(),
        }
    }

    pub fn with_mode(mut self, mode: QueryMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn with_top_k(mut self, top_k: usize) -> Self {
        self.top_k = top_k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::BadRequest("query text is empty".into()));
        }
        if self.top_k == 0 {
            return Err(Error::BadRequest("top_k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub object_id: u32,
    pub class: String,
    pub score: f64,
    pub centroid: Point3,
    pub aabb: Aabb3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub hits: Vec<Hit>,
    pub route_taken: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extracted_terms: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_text: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl QueryResult {
    pub fn object_ids(&self) -> Vec<u32> {
        self.hits.iter().map(|h| h.object_id).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryConfig {
    pub image_threshold: f64,
    pub doc_threshold: f64,
    pub band: f64,
    /// Breadth of the scene-graph step inside a two-step query.
    pub two_step_sg_top_k: usize,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            image_threshold: 0.2,
            doc_threshold: 0.25,
            band: 0.02,
            two_step_sg_top_k: 10,
        }
    }
}

/// Everything a query reads. All of it is immutable while serving.
#[derive(Clone, Copy)]
pub struct QueryContext<'a> {
    pub graph: &'a SceneGraph3D,
    pub index: &'a EmbeddingIndex,
    pub embedder: &'a dyn EmbeddingProvider,
    /// Answer and term-extraction backend; `None` selects the deterministic paths.
    pub llm: Option<&'a dyn TextGenerator>,
    pub config: &'a QueryConfig,
}

fn enrich(ctx: &QueryContext, scored: &[ScoredId]) -> Result<Vec<Hit>> {
    scored
        .iter()
        .map(|s| {
            let node = ctx
                .graph
                .nodes
                .get(&s.object_id)
                .ok_or_else(|| Error::IdMismatch(format!("index hit {} is not in the scene graph", s.object_id)))?;
            Ok(Hit {
                object_id: s.object_id,
                class: node.class.clone(),
                score: s.score,
                centroid: node.centroid,
                aabb: node.aabb,
            })
        })
        .collect()
}

pub fn query_point_cloud(q: &Query, ctx: &QueryContext) -> Result<QueryResult> {
    q.validate()?;
    let params = SearchParams {
        top_k: q.top_k,
        threshold: ctx.config.image_threshold,
        band: ctx.config.band,
    };
    let scored = query_index(&q.text, ctx.index, IndexSide::Image, &params, ctx.embedder)?;
    Ok(QueryResult {
        hits: enrich(ctx, &scored)?,
        route_taken: Route::PointCloud.to_string(),
        extracted_terms: None,
        answer_text: None,
        warnings: Vec::new(),
    })
}

/// Retrieved nodes rendered for an answer provider.
#[derive(Debug, Clone, PartialEq)]
pub struct RagContext {
    pub object_ids: Vec<u32>,
    pub prompt: String,
}

impl RagContext {
    pub fn new(query: &str, hits: &[Hit], graph: &SceneGraph3D) -> Self {
        let context: Vec<String> = hits
            .iter()
            .map(|h| {
                let doc = build_node_document(&graph.nodes[&h.object_id]).replace('\n', "; ");
                let (lo, hi) = (h.aabb.min, h.aabb.max);
                format!(
                    "[{}] {} | bbox min ({:.2}, {:.2}, {:.2}) max ({:.2}, {:.2}, {:.2})",
                    h.object_id, doc, lo.x, lo.y, lo.z, hi.x, hi.y, hi.z
                )
            })
            .collect();
        Self {
            object_ids: hits.iter().map(|h| h.object_id).collect(),
            prompt: prompts::render(prompts::RAG_ANSWER, &[("context", &context.join("\n")), ("query", query)]),
        }
    }
}

#[derive(Deserialize)]
struct RagAnswer {
    answer: String,
    #[serde(default)]
    object_ids: Vec<u32>,
}

fn ask(llm: &dyn TextGenerator, rag: &RagContext) -> Result<RagAnswer> {
    let text = llm.generate("rag_answer", &rag.prompt)?;
    let block = extract_json_block(&text).ok_or_else(|| Error::provider("answer has no JSON block"))?;
    serde_json::from_str(block).map_err(|e| Error::provider(format!("answer JSON: {e}")))
}

pub fn query_scene_graph(q: &Query, ctx: &QueryContext) -> Result<QueryResult> {
    q.validate()?;
    let params = SearchParams {
        top_k: q.top_k,
        threshold: ctx.config.doc_threshold,
        band: ctx.config.band,
    };
    let scored = query_index(&q.text, ctx.index, IndexSide::Doc, &params, ctx.embedder)?;
    let hits = enrich(ctx, &scored)?;
    let mut result = QueryResult {
        hits,
        route_taken: Route::SceneGraph.to_string(),
        extracted_terms: None,
        answer_text: None,
        warnings: Vec::new(),
    };
    if result.hits.is_empty() {
        result.answer_text = Some(NO_RESULTS.into());
        return Ok(result);
    }
    if let Some(llm) = ctx.llm {
        let rag = RagContext::new(&q.text, &result.hits, ctx.graph);
        match ask(llm, &rag) {
            Ok(answer) => {
                result.hits.retain(|h| answer.object_ids.contains(&h.object_id));
                result.answer_text = Some(answer.answer);
            }
            Err(e) => {
                result.route_taken = format!("{} (degraded: answer provider unavailable)", Route::SceneGraph);
                result.warnings.push(format!("answer provider: {e}"));
            }
        }
    }
    Ok(result)
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Whether the text contains an exclusion cue ("other than", "unlike",
/// "not", "except") as whole words.
pub fn has_exclusion_cue(text: &str) -> bool {
    earliest_cue_end(text).is_some()
}

/// Classes named anywhere after the earliest exclusion cue are removed.
pub fn excluded_classes<'a>(text: &str, classes: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let Some(tail_start) = earliest_cue_end(text) else {
        return Vec::new();
    };
    let tail = text.to_lowercase()[tail_start..].to_string();
    classes
        .into_iter()
        .filter(|c| !c.is_empty() && tail.contains(&c.to_lowercase()))
        .map(str::to_string)
        .collect()
}

fn earliest_cue_end(text: &str) -> Option<usize> {
    let lower = text.to_lowercase();
    let mut best: Option<(usize, usize)> = None;
    for cue in EXCLUSION_CUES {
        let mut from = 0;
        while let Some(pos) = lower[from..].find(cue) {
            let start = from + pos;
            let end = start + cue.len();
            let before_ok = lower[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok = lower[end..].chars().next().is_none_or(|c| !is_word_char(c));
            if before_ok && after_ok {
                if best.is_none_or(|(s, _)| start < s) {
                    best = Some((start, end));
                }
                break;
            }
            from = start + 1;
        }
    }
    best.map(|(_, end)| end)
}

fn parse_terms(text: &str) -> Option<Vec<String>> {
    let start = text.find('[')?;
    let end = text.rfind(']')?;
    if end < start {
        return None;
    }
    serde_json::from_str::<Vec<String>>(&text[start..=end]).ok()
}

fn dedup_in_order(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = std::collections::BTreeSet::new();
    items.into_iter().filter(|s| seen.insert(s.clone())).collect()
}

/// Deterministic term extraction: hit classes in rank order, minus classes
/// named after an exclusion cue.
pub fn fallback_terms(text: &str, sg: &QueryResult) -> Vec<String> {
    let classes = dedup_in_order(sg.hits.iter().map(|h| h.class.clone()));
    let excluded = excluded_classes(text, classes.iter().map(String::as_str));
    classes.into_iter().filter(|c| !excluded.contains(c)).collect()
}

/// Entity terms for the point-cloud step. Uses the language model when one
/// is configured and falls back to [`fallback_terms`] if it fails; the
/// second element carries any warning.
pub fn extract_target_terms(q: &Query, sg: &QueryResult, llm: Option<&dyn TextGenerator>) -> (Vec<String>, Option<String>) {
    if sg.hits.is_empty() {
        return (Vec::new(), None);
    }
    if let Some(llm) = llm {
        let candidates: Vec<String> = sg.hits.iter().map(|h| format!("- {} (id {})", h.class, h.object_id)).collect();
        let prompt = prompts::render(prompts::TARGET_TERMS, &[("query", &q.text), ("candidates", &candidates.join("\n"))]);
        match llm.generate("target_terms", &prompt) {
            Ok(text) => match parse_terms(&text) {
                Some(terms) => {
                    let terms = dedup_in_order(terms.into_iter().map(|t| t.trim().to_lowercase()).filter(|t| !t.is_empty()));
                    return (terms, None);
                }
                None => return (fallback_terms(&q.text, sg), Some("term provider reply was not a JSON array".into())),
            },
            Err(e) => return (fallback_terms(&q.text, sg), Some(format!("term provider: {e}"))),
        }
    }
    (fallback_terms(&q.text, sg), None)
}

/// Scene-graph retrieval, term extraction, then one point-cloud query per
/// term with max-score merging.
pub fn two_step_query(q: &Query, ctx: &QueryContext) -> Result<QueryResult> {
    q.validate()?;
    let sg_query = Query {
        top_k: ctx.config.two_step_sg_top_k.max(q.top_k),
        ..q.clone()
    };
    let mut sg = query_scene_graph(&sg_query, ctx)?;
    let (terms, warning) = extract_target_terms(q, &sg, ctx.llm);
    let mut warnings = std::mem::take(&mut sg.warnings);
    warnings.extend(warning);
    if terms.is_empty() {
        return Ok(QueryResult {
            route_taken: Route::TwoStep.to_string(),
            extracted_terms: Some(terms),
            warnings,
            ..sg
        });
    }
    let mut merged: BTreeMap<u32, Hit> = BTreeMap::new();
    for term in &terms {
        let sub = query_point_cloud(&Query::new(term.clone()).with_top_k(q.top_k), ctx)?;
        for hit in sub.hits {
            match merged.get(&hit.object_id) {
                Some(h) if h.score >= hit.score => {}
                _ => {
                    merged.insert(hit.object_id, hit);
                }
            }
        }
    }
    let mut hits: Vec<Hit> = merged.into_values().collect();
    hits.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.object_id.cmp(&b.object_id)));
    Ok(QueryResult {
        hits,
        route_taken: Route::TwoStep.to_string(),
        extracted_terms: Some(terms),
        answer_text: sg.answer_text,
        warnings,
    })
}

/// Mode used for routing: explicit modes pass through, auto classifies by
/// exclusion cues.
pub fn resolve_mode(q: &Query) -> QueryMode {
    match q.mode {
        QueryMode::Auto if has_exclusion_cue(&q.text) => QueryMode::Negation,
        QueryMode::Auto => QueryMode::Descriptive,
        m => m,
    }
}

pub fn resolve_route(q: &Query) -> Route {
    match q.route {
        Route::Auto => match resolve_mode(q) {
            QueryMode::Descriptive | QueryMode::Auto => Route::PointCloud,
            QueryMode::Affordance | QueryMode::Negation => Route::TwoStep,
        },
        r => r,
    }
}

pub fn route(q: &Query, ctx: &QueryContext) -> Result<QueryResult> {
    q.validate()?;
    match resolve_route(q) {
        Route::PointCloud => query_point_cloud(q, ctx),
        Route::SceneGraph => query_scene_graph(q, ctx),
        Route::TwoStep | Route::Auto => two_step_query(q, ctx),
    }
}
