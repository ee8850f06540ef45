//! Scene build orchestration: segment, caption, graph, index, grid.
//!
//! Every stage writes its artifacts under `derived/` and records, in
//! `derived/hashes.json`, a hash of everything it read (upstream artifacts,
//! the bundle's files, its config section and the identity of any provider)
//! plus a hash of every file it wrote. A stage whose input hash and output
//! files still match is loaded from disk instead of re-run.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use qsr_core::bundle::SceneBundle;
use qsr_core::canonical::to_canonical_string;
use qsr_core::captions::{caption_object, CaptionProvider, CaptionRecord, ViewCrop};
use qsr_core::embedding::{build_index, select_views, view_crops, EmbeddingIndex};
use qsr_core::geometry::{is_visible, CameraFrame, DepthTolerance, PointCloud};
use qsr_core::lifting::{segment_point_cloud, InstanceLabeling};
use qsr_core::nav::{rasterize_occupancy, GridMeta, OccupancyGrid};
use qsr_core::scene_graph::{aggregate_graphs, build_frame_graph, prune_edges, FrameGraph, RelationProvider, SceneGraph3D};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Result, ServiceError};
use crate::providers::Providers;

pub const HASHES_FILE: &str = "hashes.json";
pub const LABELING_FILE: &str = "labeling.json";
pub const CAPTIONS_FILE: &str = "captions.json";
pub const GRAPH_FILE: &str = "scene_graph.json";
pub const INDEX_FILE: &str = "index.qsre";
pub const GRID_FILE: &str = "grid.pgm";
pub const GRID_META_FILE: &str = "grid.json";
const LEDGER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Segment,
    Caption,
    Graph,
    Index,
    Grid,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Segment, Stage::Caption, Stage::Graph, Stage::Index, Stage::Grid];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Segment => "segment",
            Stage::Caption => "caption",
            Stage::Graph => "graph",
            Stage::Index => "index",
            Stage::Grid => "grid",
        }
    }

    fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Segment => &[LABELING_FILE],
            Stage::Caption => &[CAPTIONS_FILE],
            Stage::Graph => &[GRAPH_FILE],
            Stage::Index => &[INDEX_FILE],
            Stage::Grid => &[GRID_FILE, GRID_META_FILE],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    /// Not built yet, or its artifacts are stale.
    Absent,
    Built,
    /// Built with reduced input, e.g. panoptic classes instead of captions.
    Degraded,
    /// Could not run; nothing downstream may rely on it.
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub status: StageStatus,
    pub input_hash: String,
    /// Output file name to SHA-256 of its bytes.
    pub outputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StageRecord {
    /// Hash over the stage's outputs; this is what downstream stages consume.
    pub fn output_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.input_hash.as_bytes());
        for (name, digest) in &self.outputs {
            h.update(name.as_bytes());
            h.update(digest.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

/// The `hashes.json` ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashLedger {
    pub version: u32,
    pub bundle_hash: String,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl HashLedger {
    pub fn read(derived: &Path) -> Option<Self> {
        let text = fs::read_to_string(derived.join(HASHES_FILE)).ok()?;
        serde_json::from_str::<Self>(&text).ok().filter(|l| l.version == LEDGER_VERSION)
    }

    /// The combined build hash clients use for cache validation.
    pub fn build_hash(&self) -> String {
        let mut h = Sha256::new();
        for (stage, rec) in &self.stages {
            h.update(stage.as_str().as_bytes());
            h.update(rec.output_hash().as_bytes());
        }
        hex::encode(h.finalize())
    }

    /// Per-stage status as seen on disk: a stage whose output files are
    /// missing or altered reads as absent.
    pub fn statuses(&self, derived: &Path) -> BTreeMap<Stage, StageStatus> {
        Stage::ALL
            .iter()
            .map(|&s| {
                let status = match self.stages.get(&s) {
                    Some(rec) if outputs_intact(derived, rec) => rec.status,
                    _ => StageStatus::Absent,
                };
                (s, status)
            })
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn outputs_intact(derived: &Path, rec: &StageRecord) -> bool {
    rec.outputs
        .iter()
        .all(|(name, digest)| fs::read(derived.join(name)).map(|b| sha256_hex(&b) == *digest).unwrap_or(false))
}

/// Hash over the manifest and every file it references.
pub fn bundle_hash(bundle: &SceneBundle) -> Result<String> {
    let root = &bundle.root;
    let mut files: Vec<PathBuf> = vec![root.join(qsr_core::bundle::MANIFEST_FILE), bundle.point_cloud_path()];
    for (name, rec) in bundle.manifest.frames.iter().zip(&bundle.frames) {
        let path = root.join(name);
        let dir = path.parent().unwrap_or(root).to_path_buf();
        files.push(path);
        files.push(dir.join(&rec.depth));
        files.push(dir.join(&rec.semantic_mask));
        files.push(dir.join(&rec.instance_mask));
        if let Some(rgb) = &rec.rgb {
            files.push(dir.join(rgb));
        }
    }
    let digests: Vec<String> = files
        .par_iter()
        .map(|p| fs::read(p).map(|b| sha256_hex(&b)))
        .collect::<std::io::Result<_>>()?;
    let mut h = Sha256::new();
    for (p, d) in files.iter().zip(&digests) {
        h.update(p.strip_prefix(root).unwrap_or(p).to_string_lossy().as_bytes());
        h.update(d.as_bytes());
    }
    Ok(hex::encode(h.finalize()))
}

fn input_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

fn json_of<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("config serializes")
}

// ---------------------------------------------------------------------------
// Stage bodies, usable on their own by the CLI

/// Caption every labeled object from its best views. Objects that cannot be
/// captioned (no provider, no views, provider failure) get fallback records
/// carrying the panoptic class and a warning.
pub fn caption_objects(
    labeling: &InstanceLabeling,
    cloud: &PointCloud,
    frames: &[CameraFrame],
    provider: Option<&dyn CaptionProvider>,
    views_per_object: usize,
    tol: &DepthTolerance,
) -> (BTreeMap<u32, CaptionRecord>, Vec<String>) {
    let members = labeling.members();
    let records: Vec<CaptionRecord> = members
        .par_iter()
        .map(|(&id, idx)| {
            let class = labeling.class_name(id);
            let Some(provider) = provider else {
                return CaptionRecord::fallback(id, class, "no caption provider configured; using the panoptic class");
            };
            let points: Vec<_> = idx.iter().map(|&i| cloud.get(i)).collect();
            let crops = select_views(id, &points, frames, views_per_object, tol).and_then(|views| {
                views
                    .iter()
                    .map(|v| {
                        let mut crops = view_crops(v, &frames[v.frame_index])?;
                        Ok(ViewCrop {
                            frame_id: v.frame_id,
                            image: crops.swap_remove(0),
                        })
                    })
                    .collect::<qsr_core::Result<Vec<_>>>()
            });
            match crops.and_then(|c| caption_object(id, class, &c, provider)) {
                Ok(rec) => rec,
                Err(e) => CaptionRecord::fallback(id, class, format!("captioning failed: {e}")),
            }
        })
        .collect();
    let mut warnings = Vec::new();
    for rec in &records {
        for w in &rec.warnings {
            warnings.push(format!("object {}: {w}", rec.object_id));
        }
    }
    (records.into_iter().map(|r| (r.object_id, r)).collect(), warnings)
}

/// Objects with at least one depth-consistent labeled point in each frame.
pub fn frame_objects(labeling: &InstanceLabeling, cloud: &PointCloud, frames: &[CameraFrame], tol: &DepthTolerance) -> Vec<BTreeSet<u32>> {
    frames
        .par_iter()
        .map(|frame| {
            labeling
                .labels
                .iter()
                .enumerate()
                .filter_map(|(i, l)| l.filter(|_| is_visible(&cloud.get(i), frame, tol)))
                .collect()
        })
        .collect()
}

/// Frame graphs over the objects each frame sees, aggregated and pruned.
#[allow(clippy::too_many_arguments)]
pub fn build_scene_graph(
    labeling: &InstanceLabeling,
    cloud: &PointCloud,
    frames: &[CameraFrame],
    captions: &BTreeMap<u32, CaptionRecord>,
    relations: &dyn RelationProvider,
    pair_radius: f64,
    prune_distance: f64,
    tol: &DepthTolerance,
) -> Result<(SceneGraph3D, Vec<String>)> {
    // Nodes first, so relation providers see refined classes and geometry.
    let nodes_only = aggregate_graphs(&[], labeling, cloud, captions)?;
    let visible = frame_objects(labeling, cloud, frames, tol);
    let built: Vec<(FrameGraph, Vec<String>)> = frames
        .par_iter()
        .zip(&visible)
        .map(|(frame, ids)| {
            let summaries: Vec<_> = ids.iter().filter_map(|id| nodes_only.nodes.get(id)).map(|n| n.summary()).collect();
            build_frame_graph(frame.frame_id, &summaries, relations, pair_radius)
        })
        .collect();
    let mut warnings = Vec::new();
    let mut graphs = Vec::with_capacity(built.len());
    for (g, w) in built {
        graphs.push(g);
        warnings.extend(w);
    }
    let graph = prune_edges(&aggregate_graphs(&graphs, labeling, cloud, captions)?, prune_distance)?;
    // Round-trip through the canonical form so fresh and cached builds agree
    // to the bit.
    Ok((SceneGraph3D::from_json(&graph.to_canonical_json())?, warnings))
}

// ---------------------------------------------------------------------------
// Scene state

/// Everything needed to serve one scene. Immutable once built.
#[derive(Debug, Clone)]
pub struct SceneState {
    pub scene_id: String,
    pub root: PathBuf,
    pub labeling: InstanceLabeling,
    pub captions: BTreeMap<u32, CaptionRecord>,
    pub graph: SceneGraph3D,
    pub graph_json: String,
    pub index: Option<EmbeddingIndex>,
    pub grid: OccupancyGrid,
    pub grid_pgm: Vec<u8>,
    pub ledger: HashLedger,
    pub build_hash: String,
    pub report: BuildReport,
}

impl SceneState {
    /// `ready` when every stage is built, `degraded` otherwise.
    pub fn status(&self) -> &'static str {
        if self.ledger.stages.values().all(|r| r.status == StageStatus::Built) {
            "ready"
        } else {
            "degraded"
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub status: StageStatus,
    /// False when the stage was skipped because its artifacts were current.
    pub executed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    pub scene_id: String,
    pub build_hash: String,
    pub stages: BTreeMap<Stage, StageOutcome>,
}

impl BuildReport {
    pub fn executed(&self) -> Vec<Stage> {
        self.stages.iter().filter(|(_, o)| o.executed).map(|(s, _)| *s).collect()
    }
}

/// Builder state threaded through the stages.
struct Builder {
    derived: PathBuf,
    previous: Option<HashLedger>,
    ledger: HashLedger,
    report: BTreeMap<Stage, StageOutcome>,
    force: bool,
}

impl Builder {
    /// The cached record for `stage` if its inputs and outputs still match.
    fn cached(&self, stage: Stage, input: &str) -> Option<StageRecord> {
        if self.force {
            return None;
        }
        let rec = self.previous.as_ref()?.stages.get(&stage)?;
        (rec.input_hash == input && outputs_intact(&self.derived, rec)).then(|| rec.clone())
    }

    fn write(&self, name: &str, bytes: &[u8]) -> Result<String> {
        fs::write(self.derived.join(name), bytes)?;
        Ok(sha256_hex(bytes))
    }

    fn remove_outputs(&self, stage: Stage) {
        for name in stage.outputs() {
            let _ = fs::remove_file(self.derived.join(name));
        }
    }

    fn finish(&mut self, stage: Stage, rec: StageRecord, executed: bool) -> String {
        self.report.insert(
            stage,
            StageOutcome {
                status: rec.status,
                executed,
                warnings: rec.warnings.clone(),
            },
        );
        let out = rec.output_hash();
        self.ledger.stages.insert(stage, rec);
        out
    }
}

fn read_derived(derived: &Path, name: &str) -> Result<Vec<u8>> {
    Ok(fs::read(derived.join(name))?)
}

fn read_derived_str(derived: &Path, name: &str) -> Result<String> {
    Ok(fs::read_to_string(derived.join(name))?)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    /// Re-run every stage even when its artifacts are current.
    pub force: bool,
}

/// Builds (or refreshes) every derived artifact of a bundle and returns the
/// serving state.
pub fn build_scene(bundle: &SceneBundle, config: &Config, providers: &Providers, options: BuildOptions) -> Result<SceneState> {
    let derived = bundle.derived_dir();
    fs::create_dir_all(&derived)?;
    let bundle_hash = bundle_hash(bundle)?;
    let previous = HashLedger::read(&derived);
    let mut b = Builder {
        derived: derived.clone(),
        previous,
        ledger: HashLedger {
            version: LEDGER_VERSION,
            bundle_hash: bundle_hash.clone(),
            stages: BTreeMap::new(),
        },
        report: BTreeMap::new(),
        force: options.force,
    };
    let tol = config.lifting.tolerance;
    let tol_json = json_of(&tol);

    // Raw inputs are loaded lazily: a fully cached build never decodes frames.
    let mut cloud: Option<PointCloud> = None;
    let mut frames: Option<Vec<CameraFrame>> = None;
    macro_rules! cloud {
        () => {{
            if cloud.is_none() {
                cloud = Some(bundle.load_point_cloud()?);
            }
            cloud.as_ref().unwrap()
        }};
    }
    macro_rules! frames {
        () => {{
            if frames.is_none() {
                frames = Some(bundle.load_frames()?);
            }
            frames.as_deref().unwrap()
        }};
    }

    // segment
    let input = input_hash(&["segment", &bundle_hash, &json_of(&config.lifting)]);
    let (labeling, seg_hash) = match b.cached(Stage::Segment, &input) {
        Some(rec) => {
            let labeling = InstanceLabeling::from_json(&read_derived_str(&derived, LABELING_FILE)?)?;
            (labeling, b.finish(Stage::Segment, rec, false))
        }
        None => {
            let seg = segment_point_cloud(cloud!(), frames!(), &bundle.manifest.semantic_classes, &config.lifting)?;
            let text = seg.labeling.to_json();
            let digest = b.write(LABELING_FILE, text.as_bytes())?;
            let labeling = InstanceLabeling::from_json(&text)?;
            let rec = StageRecord {
                status: StageStatus::Built,
                input_hash: input,
                outputs: BTreeMap::from([(LABELING_FILE.to_string(), digest)]),
                warnings: seg.warnings,
            };
            (labeling, b.finish(Stage::Segment, rec, true))
        }
    };

    // caption
    let input = input_hash(&[
        "caption",
        &bundle_hash,
        &seg_hash,
        &json_of(&config.captions),
        &tol_json,
        providers.fingerprint("captions"),
    ]);
    let (captions, cap_hash) = match b.cached(Stage::Caption, &input) {
        Some(rec) => {
            let captions: BTreeMap<u32, CaptionRecord> = serde_json::from_str(&read_derived_str(&derived, CAPTIONS_FILE)?)?;
            (captions, b.finish(Stage::Caption, rec, false))
        }
        None => {
            let (captions, warnings) = caption_objects(
                &labeling,
                cloud!(),
                frames!(),
                providers.captions.as_deref(),
                config.captions.views_per_object,
                &tol,
            );
            let text = to_canonical_string(&captions)? + "\n";
            let digest = b.write(CAPTIONS_FILE, text.as_bytes())?;
            let degraded = providers.captions.is_none() || captions.values().any(|r| r.unified_caption.is_empty());
            let rec = StageRecord {
                status: if degraded { StageStatus::Degraded } else { StageStatus::Built },
                input_hash: input,
                outputs: BTreeMap::from([(CAPTIONS_FILE.to_string(), digest)]),
                warnings,
            };
            (serde_json::from_str(&text)?, b.finish(Stage::Caption, rec, true))
        }
    };

    // graph
    let input = input_hash(&[
        "graph",
        &bundle_hash,
        &seg_hash,
        &cap_hash,
        &json_of(&config.graph),
        &tol_json,
        providers.fingerprint("relations"),
    ]);
    let (graph, graph_json, graph_hash) = match b.cached(Stage::Graph, &input) {
        Some(rec) => {
            let text = read_derived_str(&derived, GRAPH_FILE)?;
            let graph = SceneGraph3D::from_json(&text)?;
            (graph, text, b.finish(Stage::Graph, rec, false))
        }
        None => {
            let (graph, warnings) = build_scene_graph(
                &labeling,
                cloud!(),
                frames!(),
                &captions,
                providers.relations.as_ref(),
                config.graph.pair_radius,
                config.graph.prune_distance,
                &tol,
            )?;
            let text = graph.to_canonical_json();
            let digest = b.write(GRAPH_FILE, text.as_bytes())?;
            let rec = StageRecord {
                status: StageStatus::Built,
                input_hash: input,
                outputs: BTreeMap::from([(GRAPH_FILE.to_string(), digest)]),
                warnings,
            };
            (graph, text, b.finish(Stage::Graph, rec, true))
        }
    };

    // index
    let input = input_hash(&[
        "index",
        &bundle_hash,
        &graph_hash,
        &json_of(&config.index),
        &tol_json,
        providers.fingerprint("embeddings"),
    ]);
    let index = match (b.cached(Stage::Index, &input), providers.embedder.as_deref()) {
        (Some(rec), _) if rec.status == StageStatus::Unavailable => {
            b.finish(Stage::Index, rec, false);
            None
        }
        (Some(rec), _) => {
            let index = EmbeddingIndex::from_bytes(&read_derived(&derived, INDEX_FILE)?)?;
            b.finish(Stage::Index, rec, false);
            Some(index)
        }
        (None, None) => {
            b.remove_outputs(Stage::Index);
            let rec = StageRecord {
                status: StageStatus::Unavailable,
                input_hash: input,
                outputs: BTreeMap::new(),
                warnings: vec!["no embedding provider configured; queries are unavailable".into()],
            };
            b.finish(Stage::Index, rec, true);
            None
        }
        (None, Some(embedder)) => {
            let (index, warnings) = build_index(&graph, cloud!().points(), frames!(), embedder, &config.index, &tol)?;
            let bytes = index.to_bytes();
            let digest = b.write(INDEX_FILE, &bytes)?;
            let rec = StageRecord {
                status: StageStatus::Built,
                input_hash: input,
                outputs: BTreeMap::from([(INDEX_FILE.to_string(), digest)]),
                warnings,
            };
            b.finish(Stage::Index, rec, true);
            Some(EmbeddingIndex::from_bytes(&bytes)?)
        }
    };

    // grid
    let input = input_hash(&["grid", &bundle_hash, &json_of(&config.grid)]);
    let (grid, grid_pgm) = match b.cached(Stage::Grid, &input) {
        Some(rec) => {
            let meta: GridMeta = serde_json::from_str(&read_derived_str(&derived, GRID_META_FILE)?)?;
            let pgm = read_derived(&derived, GRID_FILE)?;
            let grid = OccupancyGrid::from_pgm(&meta, &pgm)?;
            b.finish(Stage::Grid, rec, false);
            (grid, pgm)
        }
        None => {
            let grid = rasterize_occupancy(cloud!(), &config.grid)?;
            let pgm = grid.to_pgm();
            let meta = serde_json::to_string_pretty(&grid.meta())? + "\n";
            let outputs = BTreeMap::from([
                (GRID_FILE.to_string(), b.write(GRID_FILE, &pgm)?),
                (GRID_META_FILE.to_string(), b.write(GRID_META_FILE, meta.as_bytes())?),
            ]);
            let rec = StageRecord {
                status: StageStatus::Built,
                input_hash: input,
                outputs,
                warnings: Vec::new(),
            };
            b.finish(Stage::Grid, rec, true);
            (grid, pgm)
        }
    };

    let ledger = b.ledger;
    fs::write(derived.join(HASHES_FILE), serde_json::to_string_pretty(&ledger)? + "\n")?;
    let build_hash = ledger.build_hash();
    let scene_id = bundle.manifest.scene_id.clone();
    Ok(SceneState {
        report: BuildReport {
            scene_id: scene_id.clone(),
            build_hash: build_hash.clone(),
            stages: b.report,
        },
        scene_id,
        root: bundle.root.clone(),
        labeling,
        captions,
        graph,
        graph_json,
        index,
        grid,
        grid_pgm,
        ledger,
        build_hash,
    })
}

/// Every directory under `dir` (including `dir` itself) holding a bundle
/// manifest, sorted by path.
pub fn discover_bundles(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(qsr_core::bundle::MANIFEST_FILE).is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| ServiceError::Config(format!("{}: {e}", dir.display())))? {
        let path = entry?.path();
        if path.join(qsr_core::bundle::MANIFEST_FILE).is_file() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}
