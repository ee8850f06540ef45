//! REST API over built scenes.
//!
//! | method | path                           | body                                   |
//! |--------|--------------------------------|----------------------------------------|
//! | GET    | `/scenes`                      |                                        |
//! | GET    | `/scenes/{id}/graph`           |                                        |
//! | GET    | `/scenes/{id}/objects/{oid}`   |                                        |
//! | POST   | `/scenes/{id}/query`           | `{text, mode?, route?, top_k?}`        |
//! | POST   | `/scenes/{id}/navigate`        | `{object_id \| goal: [x, y], start}`   |
//! | POST   | `/scenes/{id}/consolidate`     | `{observed_graph}`                     |
//! | GET    | `/scenes/{id}/grid.pgm`        |                                        |
//!
//! Every scene response carries `X-QSR-Scene` and `X-QSR-Build-Hash`
//! headers; JSON object bodies also carry `scene_id` and `build_hash`
//! fields. The graph endpoint returns the canonical graph bytes unchanged.
//! Errors are `{"error": {code, status, message}}`.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use qsr_core::captions::ObjectAttributes;
use qsr_core::geometry::{Aabb3, Point3};
use qsr_core::nav::plan_path;
use qsr_core::query::{route, Query, QueryContext};
use qsr_core::scene_graph::{consolidate, SceneChange, SceneGraph3D};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Config;
use crate::error::{Result, ServiceError};
use crate::pipeline::SceneState;
use crate::providers::Providers;

pub const SCENE_HEADER: &str = "x-qsr-scene";
pub const BUILD_HASH_HEADER: &str = "x-qsr-build-hash";

/// Shared server state. Scene states are immutable; a rebuild swaps in a new
/// `Arc` under the write lock.
pub struct AppState {
    scenes: RwLock<BTreeMap<String, Arc<SceneState>>>,
    pub providers: Providers,
    pub config: Config,
}

impl AppState {
    pub fn new(config: Config, providers: Providers, scenes: impl IntoIterator<Item = SceneState>) -> Self {
        Self {
            scenes: RwLock::new(scenes.into_iter().map(|s| (s.scene_id.clone(), Arc::new(s))).collect()),
            providers,
            config,
        }
    }

    pub fn scene(&self, id: &str) -> Result<Arc<SceneState>> {
        self.scenes
            .read()
            .expect("scene lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownScene(id.to_string()))
    }

    /// Installs (or atomically replaces) a scene.
    pub fn put_scene(&self, state: SceneState) {
        self.scenes.write().expect("scene lock").insert(state.scene_id.clone(), Arc::new(state));
    }

    pub fn scene_list(&self) -> Vec<SceneSummary> {
        self.scenes
            .read()
            .expect("scene lock")
            .values()
            .map(|s| SceneSummary {
                scene_id: s.scene_id.clone(),
                status: s.status().to_string(),
                object_count: s.graph.nodes.len(),
                build_hash: s.build_hash.clone(),
            })
            .collect()
    }

    /// Runs a query against a scene.
    pub fn query(&self, scene: &SceneState, q: &Query) -> Result<qsr_core::query::QueryResult> {
        q.validate()?;
        let index = scene.index.as_ref().ok_or_else(|| ServiceError::StageUnavailable {
            stage: "index",
            reason: "the scene was built without an embedding provider".into(),
        })?;
        let embedder = self
            .providers
            .embedder
            .as_deref()
            .ok_or_else(|| ServiceError::ProviderUnavailable("no embedding provider configured".into()))?;
        let ctx = QueryContext {
            graph: &scene.graph,
            index,
            embedder,
            llm: self.providers.llm.as_deref(),
            config: &self.config.query,
        };
        Ok(route(q, &ctx)?)
    }

    pub fn navigate(&self, scene: &SceneState, req: &NavigateRequest) -> Result<qsr_core::nav::NavPath> {
        let (goal, goal_id) = match (req.object_id, req.goal) {
            (Some(id), None) => {
                let node = scene.graph.nodes.get(&id).ok_or_else(|| ServiceError::UnknownObject {
                    scene_id: scene.scene_id.clone(),
                    object_id: id,
                })?;
                (node.aabb, Some(id))
            }
            (None, Some([x, y])) => {
                let p = Point3::new(x, y, 0.0);
                (Aabb3 { min: p, max: p }, None)
            }
            _ => return Err(ServiceError::BadRequest("give exactly one of object_id and goal".into())),
        };
        if !req.start.iter().chain(req.goal.iter().flatten()).all(|v| v.is_finite()) {
            return Err(ServiceError::BadRequest("coordinates must be finite".into()));
        }
        Ok(plan_path(&scene.grid, req.start, &goal, goal_id, &self.config.planner)?)
    }

    pub fn consolidate(&self, scene: &SceneState, req: ConsolidateRequest) -> Result<ConsolidateResponse> {
        let observed = SceneGraph3D::from_value(req.observed_graph)?;
        let (updated, changes) = consolidate(&scene.graph, &observed, &self.config.consolidation);
        Ok(ConsolidateResponse {
            changes,
            updated_graph: serde_json::from_str(&updated.to_canonical_json())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSummary {
    pub scene_id: String,
    pub status: String,
    pub object_count: usize,
    pub build_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavigateRequest {
    #[serde(default)]
    pub object_id: Option<u32>,
    #[serde(default)]
    pub goal: Option<[f64; 2]>,
    pub start: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidateRequest {
    pub observed_graph: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidateResponse {
    pub changes: Vec<SceneChange>,
    pub updated_graph: Value,
}

/// A scene-graph node as served: everything but the point index list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectResponse {
    pub object_id: u32,
    pub class: String,
    pub caption: String,
    pub attributes: ObjectAttributes,
    pub centroid: Point3,
    pub aabb: Aabb3,
    pub point_count: usize,
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/scenes/{id}/graph", get(get_graph))
        .route("/scenes/{id}/objects/{oid}", get(get_object))
        .route("/scenes/{id}/query", post(post_query))
        .route("/scenes/{id}/navigate", post(post_navigate))
        .route("/scenes/{id}/consolidate", post(post_consolidate))
        .route("/scenes/{id}/grid.pgm", get(get_grid))
        .fallback(|| async { ServiceError::NotFound("no such endpoint".into()).into_response() })
        .with_state(state)
}

/// Binds `addr` and serves until `shutdown` resolves.
pub async fn serve(state: Shared, addr: SocketAddr, shutdown: impl std::future::Future<Output = ()> + Send + 'static) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

fn scene_headers(mut resp: Response, scene: &SceneState) -> Response {
    let h = resp.headers_mut();
    if let Ok(v) = HeaderValue::from_str(&scene.scene_id) {
        h.insert(SCENE_HEADER, v);
    }
    if let Ok(v) = HeaderValue::from_str(&scene.build_hash) {
        h.insert(BUILD_HASH_HEADER, v);
    }
    resp
}

/// JSON body tagged with the scene id and build hash, or the error.
fn scene_json<T: Serialize>(scene: &SceneState, result: Result<T>) -> Response {
    let resp = match result.and_then(|v| Ok(serde_json::to_value(v)?)) {
        Ok(mut v) => {
            if let Value::Object(m) = &mut v {
                m.insert("scene_id".into(), Value::String(scene.scene_id.clone()));
                m.insert("build_hash".into(), Value::String(scene.build_hash.clone()));
            }
            Json(v).into_response()
        }
        Err(e) => e.into_response(),
    };
    scene_headers(resp, scene)
}

fn body<T>(payload: std::result::Result<Json<T>, JsonRejection>) -> Result<T> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

/// Runs blocking work (provider calls, planning) off the async workers.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ServiceError::Io(std::io::Error::other(e.to_string()))))
}

async fn list_scenes(State(app): State<Shared>) -> Response {
    Json(app.scene_list()).into_response()
}

async fn get_graph(State(app): State<Shared>, Path(id): Path<String>) -> Response {
    match app.scene(&id) {
        Ok(scene) => scene_headers(
            ([(header::CONTENT_TYPE, "application/json")], scene.graph_json.clone()).into_response(),
            &scene,
        ),
        Err(e) => e.into_response(),
    }
}

async fn get_grid(State(app): State<Shared>, Path(id): Path<String>) -> Response {
    match app.scene(&id) {
        Ok(scene) => scene_headers(
            ([(header::CONTENT_TYPE, "image/x-portable-graymap")], scene.grid_pgm.clone()).into_response(),
            &scene,
        ),
        Err(e) => e.into_response(),
    }
}

async fn get_object(State(app): State<Shared>, Path((id, oid)): Path<(String, String)>) -> Response {
    let scene = match app.scene(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let result = oid
        .parse::<u32>()
        .map_err(|_| ServiceError::BadRequest(format!("object id \"{oid}\" is not a non-negative integer")))
        .and_then(|oid| {
            scene.graph.nodes.get(&oid).ok_or_else(|| ServiceError::UnknownObject {
                scene_id: scene.scene_id.clone(),
                object_id: oid,
            })
        })
        .map(|n| ObjectResponse {
            object_id: n.object_id,
            class: n.class.clone(),
            caption: n.caption.clone(),
            attributes: n.attributes.clone(),
            centroid: n.centroid,
            aabb: n.aabb,
            point_count: n.point_indices.len(),
        });
    scene_json(&scene, result)
}

async fn post_query(State(app): State<Shared>, Path(id): Path<String>, payload: std::result::Result<Json<Query>, JsonRejection>) -> Response {
    let scene = match app.scene(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let result = match body(payload) {
        Ok(q) => {
            let (app, s) = (app.clone(), scene.clone());
            blocking(move || app.query(&s, &q)).await
        }
        Err(e) => Err(e),
    };
    scene_json(&scene, result)
}

async fn post_navigate(
    State(app): State<Shared>,
    Path(id): Path<String>,
    payload: std::result::Result<Json<NavigateRequest>, JsonRejection>,
) -> Response {
    let scene = match app.scene(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let result = match body(payload) {
        Ok(req) => {
            let (app, s) = (app.clone(), scene.clone());
            blocking(move || app.navigate(&s, &req)).await
        }
        Err(e) => Err(e),
    };
    scene_json(&scene, result)
}

async fn post_consolidate(
    State(app): State<Shared>,
    Path(id): Path<String>,
    payload: std::result::Result<Json<ConsolidateRequest>, JsonRejection>,
) -> Response {
    let scene = match app.scene(&id) {
        Ok(s) => s,
        Err(e) => return e.into_response(),
    };
    let result = match body(payload) {
        Ok(req) => {
            let (app, s) = (app.clone(), scene.clone());
            blocking(move || app.consolidate(&s, req)).await
        }
        Err(e) => Err(e),
    };
    scene_json(&scene, result)
}
